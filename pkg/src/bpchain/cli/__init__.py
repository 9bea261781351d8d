from .main import CliConfig, ConfigError, main, run
from .parser import ParseError, normalize, parse_map_spec

__all__ = ["CliConfig", "ConfigError", "ParseError", "main", "normalize", "parse_map_spec", "run"]
