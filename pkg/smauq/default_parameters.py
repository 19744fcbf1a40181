"""
Default parameters for the command line.

Values ending in .json are paths relative to the package and are read
during process_params; everything here can be overwritten on the command line.
"""

PARAMETERS = {
    "pipeline_config": "default_configs/default_pipeline.json",
    "config": None,
    "output": None,
    "seed": None,
    "jobs": None,
    "stress": None,
    "method": None,
    "data": [],
    "chain": None,
    "burn_in": None,
    "save_plots": None,
    "log_level": "INFO",
}

OUTPUT_ENVIRONMENT_VARIABLE = "SMAUQ_OUTPUT"
DEFAULT_OUTPUT = "smauq_output"
