# app.py
import sys

import click
import structlog
from dotenv import load_dotenv

# .env overrides must be in place before config reads the environment
load_dotenv()

from config import get_config, validate_environment
from errors import TabDecompError
from extensions import configure_logging

# Import commands
from commands.importance import importance_command
from commands.decompose import decompose_command
from commands.fit import fit_command
from commands.model import probs_command, sample_command
from commands.evaluate import eval_kl_command, eval_roc_command
from commands.simulate import simulate_command

logger = structlog.get_logger(__name__)

EX_USAGE = 64


@click.group()
@click.option('--log-level', type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False),
              default=None, help='Overrides the configured log level.')
@click.option('--threads', type=click.IntRange(min=1), default=None, help='Worker cap for parallel stages.')
@click.version_option(get_config().APP_VERSION, prog_name=get_config().APP_NAME)
@click.pass_context
def cli(ctx, log_level, threads):
    """Sparse log-linear and graphical models for large contingency tables"""
    config = get_config()
    configure_logging(log_level or config.LOG_LEVEL)
    status = validate_environment()
    for warning in status['warnings']:
        logger.warning("environment_warning", detail=warning)
    if not status['valid']:
        raise click.UsageError('; '.join(status['errors']))
    ctx.obj = {'config': config, 'threads': threads or config.THREADS}


# Register commands
cli.add_command(importance_command)
cli.add_command(decompose_command)
cli.add_command(fit_command)
cli.add_command(sample_command)
cli.add_command(probs_command)
cli.add_command(eval_roc_command)
cli.add_command(eval_kl_command)
cli.add_command(simulate_command)


def main(argv=None) -> int:
    """Run the CLI and map failures onto exit statuses"""
    try:
        result = cli.main(args=argv, prog_name='tabdecomp', standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return EX_USAGE
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.Abort:
        click.echo('Aborted!', err=True)
        return 1
    except TabDecompError as exc:
        logger.error("command_failed", **exc.to_dict())
        click.echo(f"Error: {exc}", err=True)
        return exc.exit_code
    except OSError as exc:
        logger.error("io_failed", error=str(exc), path=getattr(exc, 'filename', None))
        click.echo(f"Error: {exc}", err=True)
        return 1
    return result if isinstance(result, int) else 0


if __name__ == '__main__':
    sys.exit(main())
