from .report_manager import ReportAccumulator, ReportProgress

__all__ = ["ReportAccumulator", "ReportProgress"]
