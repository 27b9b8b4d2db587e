## @namespace utils
#  Logging shared by every ctxmesh service and the CLI.
import logging
from datetime import datetime
from typing import Any, Dict, Optional
# import locals
from config.config import settings as settings

JsonDict = Dict[str, Any]

_LEVELS : Dict[str, int] = {
    "ERROR"   : logging.ERROR,
    "WARNING" : logging.WARNING,
    "INFO"    : logging.INFO,
    "DEBUG"   : logging.DEBUG,
}

class Logger:
    std_logger  : logging.Logger   = logging.getLogger("ctxmesh")
    file_logger : Optional[logging.Logger] = None

    # Set up loggers. First, the std out logger
    if not std_logger.hasHandlers():
        stdout_handler = logging.StreamHandler()
        std_logger.addHandler(stdout_handler)
    std_logger.setLevel(level=_LEVELS.get(str(settings['DEBUG_LEVEL']).upper(), logging.INFO))
    std_logger.propagate = False

    # Then, set up the file logger. Check for permissions errors.
    if settings.get('LOG_FILE', False):
        file_logger = logging.getLogger("ctxmesh_file")
        file_logger.setLevel(level=logging.DEBUG)
        try:
            err_handler = logging.FileHandler("./CtxMeshErrorReport.log", encoding="utf-8")
            debug_handler = logging.FileHandler("./CtxMeshDebugReport.log", encoding="utf-8")
        except PermissionError as err:
            std_logger.exception(f"Failed permissions check for log files. No file logging on this host.")
        else:
            err_handler.setLevel(level=logging.WARNING)
            file_logger.addHandler(err_handler)
            debug_handler.setLevel(level=logging.DEBUG)
            file_logger.addHandler(debug_handler)

    @staticmethod
    def SetLevel(level_name:str) -> None:
        """Change the standard out level at runtime, e.g. from a --log flag.

        :param level_name: One of error, warning, info, debug (any case).
        :type level_name: str
        """
        Logger.std_logger.setLevel(_LEVELS.get(level_name.upper(), logging.INFO))

    # Function to print a message to both the standard out and file logs.
    # Useful for "general" errors where you just want to print out the exception from a "backstop" try-catch block.
    @staticmethod
    def Log(message:str, level=logging.INFO, depth:int=0) -> None:
        indent = '  '*depth
        if Logger.file_logger is not None:
            now = datetime.now().strftime("%y-%m-%d %H:%M:%S")
            if level == logging.DEBUG:
                Logger.file_logger.debug(f"DEBUG:   {now} {indent}{message}")
            elif level == logging.INFO:
                Logger.file_logger.info( f"INFO:    {now} {indent}{message}")
            elif level == logging.WARNING:
                Logger.file_logger.warning( f"WARNING: {now} {indent}{message}")
            elif level >= logging.ERROR:
                Logger.file_logger.error(f"ERROR:   {now} {indent}{message}")
        if Logger.std_logger is not None:
            if level == logging.DEBUG:
                Logger.std_logger.debug(f"DEBUG:   {indent}{message}")
            elif level == logging.INFO:
                Logger.std_logger.info( f"INFO:    {indent}{message}")
            elif level == logging.WARNING:
                Logger.std_logger.warning( f"WARNING: {indent}{message}")
            elif level >= logging.ERROR:
                Logger.std_logger.error(f"ERROR:   {indent}{message}")
