# commands/options.py
"""Options and loaders shared by the command modules."""
import click
import structlog

from models.loglinear import METHOD_TAGS
from models.run_config import RunConfig
from services.data_service import read_dataset

logger = structlog.get_logger(__name__)

seed_option = click.option('--seed', type=int, required=True, help='Seed for every random draw of the run.')
method_option = click.option(
    '--method', type=click.Choice(METHOD_TAGS), default='dgl-cv', show_default=True,
    help='dgl: fixed lambda, dgl-cv: CV lambda, dgl-f: CV lambda plus separator thresholding, '
         'dsf: stepwise with fixed s, dsf-aic: stepwise with s=2, df: saturated clique MLEs.',
)
data_option = click.option('--data', 'data_path', type=click.Path(dir_okay=False), required=True,
                           help='Observations CSV with a header row of variable names.')
schema_option = click.option('--schema', 'schema_path', type=click.Path(dir_okay=False),
                             default=None, help='Sidecar schema CSV (name,levels per line).')


def load_data(data_path, schema_path=None):
    return read_dataset(data_path, schema_path)


def threads(ctx) -> int:
    return ctx.obj['threads'] if ctx.obj else 1


def start_run(ctx, command, **values) -> RunConfig:
    """Validate the invocation and log it"""
    config = ctx.obj['config'] if ctx.obj else None
    values['threads'] = threads(ctx)
    if config is not None:
        for key, default in (('smax', config.S_MAX), ('folds', config.CV_FOLDS)):
            if values.get(key) is None:
                values[key] = default
    run = RunConfig(command=command, **{k: v for k, v in values.items() if v is not None})
    logger.info("run_started", **run.to_dict())
    return run
