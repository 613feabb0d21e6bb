from pamir.main import main

main()
