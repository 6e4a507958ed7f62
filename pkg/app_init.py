import logging
import warnings
from typing import Optional

from config import get_settings


def initialize_app(level: Optional[str] = None) -> None:
    """Configure logging for the CLI, the scripts and the report viewer."""
    level_name = (level or get_settings().log_level).upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logging.getLogger('streamlit').setLevel(logging.ERROR)
    logging.getLogger('asyncio').setLevel(logging.ERROR)

    warnings.filterwarnings("ignore", category=DeprecationWarning)


if __name__ == "__main__":
    initialize_app()
