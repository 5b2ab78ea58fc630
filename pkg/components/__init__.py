# components 패키지 초기화
"""
공통 컴포넌트 모듈
CLI 에러 안내와 리포트 내보내기
"""

from .utils import (
    show_friendly_error,
    export_excel_report,
    format_ratio,
)

__all__ = [
    "show_friendly_error",
    "export_excel_report",
    "format_ratio",
]
