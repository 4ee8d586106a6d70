from .config import ExperimentConfig, default_config, load_config, save_config
from .run import cmd_eval, cmd_train, evaluate
from .compare import cmd_compare
from .plots import cmd_export_plots

__all__ = [
    "ExperimentConfig",
    "default_config",
    "load_config",
    "save_config",
    "cmd_train",
    "cmd_eval",
    "evaluate",
    "cmd_compare",
    "cmd_export_plots",
]
