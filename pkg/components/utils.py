"""
공통 유틸리티
CLI와 러너에서 공유하는 에러 안내, 리포트 내보내기
"""

import logging
import re
from pathlib import Path

import pandas as pd

from errors import (
    ArgumentError,
    ConfigError,
    DataFormatError,
    LabError,
    NumericError,
    RunError,
    ShapeError,
    StateError,
)

logger = logging.getLogger("pdiff")


# ===== 에러 표시 헬퍼 함수 =====
def show_friendly_error(error: Exception, context: str = "") -> int:
    """
    사용자 친화적 에러 메시지를 로그로 남기고 종료 코드를 돌려준다.

    Returns:
        LabError면 해당 exit_code, 그 외 1
    """
    cause = error.cause if isinstance(error, RunError) and error.cause is not None else error
    prefix = f"[{context}] " if context else ""

    if isinstance(cause, ConfigError):
        logger.error("%s설정 오류: %s", prefix, cause)
        logger.info("설정 파일의 키 이름과 값 형식을 확인해주세요. (README 참고)")
    elif isinstance(cause, DataFormatError):
        logger.error("%s데이터 형식 오류: %s", prefix, cause)
        logger.info("파일 경로, 압축 여부(.gz), 헤더/컬럼을 확인해주세요.")
    elif isinstance(cause, ArgumentError):
        logger.error("%s인자 오류: %s", prefix, cause)
    elif isinstance(cause, StateError):
        logger.error("%s상태 오류: %s", prefix, cause)
        logger.info("중단된 실행의 결과는 다시 실행해야 합니다.")
    elif isinstance(cause, (ShapeError, NumericError)):
        logger.error("%s수치 오류: %s", prefix, cause)
        logger.info("학습률을 낮추거나 입력 스케일을 확인해주세요.")
    else:
        logger.exception("%s오류 발생: %s", prefix, error)

    if isinstance(error, RunError) and error.epoch is not None:
        logger.error("%s중단된 에포크: %d", prefix, error.epoch)

    return error.exit_code if isinstance(error, LabError) else 1


# ===== 리포트 내보내기 =====
def export_excel_report(df: pd.DataFrame, path, sheet_name: str = "report") -> Path:
    """DataFrame 하나를 xlsx 시트로 저장 (시트명은 엑셀 규칙에 맞게 정제)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    safe_sheet = re.sub(r'[\\/*?:\[\]]', '_', str(sheet_name))[:31] or "report"

    with pd.ExcelWriter(path, engine="openpyxl") as writer:
        if df is None or df.empty:
            pd.DataFrame({"결과": ["비교할 데이터가 없습니다."]}).to_excel(writer, sheet_name="Empty", index=False)
        else:
            df.to_excel(writer, sheet_name=safe_sheet, index=False)

    logger.info("리포트 저장: %s", path)
    return path


def format_ratio(value, digits: int = 4) -> str:
    """None/NaN은 '-'로 표시"""
    if value is None or pd.isna(value):
        return "-"
    return f"{value:.{digits}f}"
