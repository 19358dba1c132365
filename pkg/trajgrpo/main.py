import logging
import sys
from typing import Optional, Sequence

import click
from pydantic import ValidationError

from . import __version__
from .commands import setup_data_commands, setup_evaluation_commands, setup_training_commands
from .config import Config
from .services.harness_service import AcceptanceCheckFailed, ScenarioFileError
from .utils.logger import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ACCEPTANCE = 3

config = Config()


@click.group()
@click.version_option(__version__, prog_name="trajgrpo")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"], case_sensitive=False),
              default=None, help="Override TRAJGRPO_LOG_LEVEL")
@click.option("--log-json/--no-log-json", default=None, help="JSON structured logs on stderr")
@click.option("--quiet", is_flag=True, help="Only log warnings and errors")
def cli(log_level, log_json, quiet):
    """GRPO trajectory planning engine: rewards, kinematics checks, training and evaluation."""
    level = "WARNING" if quiet else (log_level or config.log_level)
    setup_logging(
        log_level=level,
        json_format=config.log_json if log_json is None else log_json,
        log_file=config.log_file,
    )


setup_data_commands(cli, config)
setup_evaluation_commands(cli, config)
setup_training_commands(cli, config)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and map failures to exit codes: 1 usage, 2 data, 3 acceptance check."""
    error_msgs = config.get_config_messages("error_messages")
    try:
        result = cli.main(args=list(argv) if argv is not None else None, prog_name="trajgrpo", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.Abort:
        click.echo("Aborted!", err=True)
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_DATA
    except AcceptanceCheckFailed as e:
        logger.error(f"❌ {e}")
        return EXIT_ACCEPTANCE
    except ScenarioFileError as e:
        logger.error(f"❌ {error_msgs.get('data_error', 'Data error: {detail}').format(detail=e)}")
        return EXIT_DATA
    except (OSError, ValidationError, ValueError) as e:
        logger.error(f"❌ {error_msgs.get('data_error', 'Data error: {detail}').format(detail=e)}")
        return EXIT_DATA
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        return EXIT_USAGE
    return result if isinstance(result, int) else EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
