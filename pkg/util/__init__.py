from util.log_handler import setup_logger

# Shared across config loading, the zsl package and the CLI handlers.
logger = setup_logger(name="zsl-dual")
