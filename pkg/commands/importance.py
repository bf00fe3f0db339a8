# commands/importance.py
import click

from config import get_config
from models.importance import ForestConfig
from services.artifact_service import write_importance
from services.importance_service import importance_matrix

from commands.options import data_option, load_data, schema_option, seed_option, start_run, threads


@click.command('importance')
@data_option
@schema_option
@click.option('--out-importance', type=click.Path(dir_okay=False), required=True,
              help='Importance matrix M (row = response).')
@click.option('--out-ranks', type=click.Path(dir_okay=False), required=True,
              help='Symmetrized rank matrix R-tilde.')
@click.option('--trees', type=click.IntRange(min=1), default=None, help='Trees per forest.')
@click.option('--min-leaf', type=click.IntRange(min=1), default=None, help='Minimum observations per leaf.')
@click.option('--max-features', type=click.IntRange(min=1), default=None, help='Candidate variables per split.')
@click.option('--max-depth', type=click.IntRange(min=0), default=None, help='Tree depth limit.')
@seed_option
@click.pass_context
def importance_command(ctx, data_path, schema_path, out_importance, out_ranks, trees, min_leaf,
                       max_features, max_depth, seed):
    """Node-wise random-forest importances and their symmetrized ranks"""
    start_run(ctx, 'importance', seed=seed,
              inputs={'data': data_path, 'schema': schema_path or ''},
              outputs={'importance': out_importance, 'ranks': out_ranks})
    data = load_data(data_path, schema_path)
    forest = ForestConfig.from_config(
        get_config(), seed=seed, n_trees=trees, min_samples_leaf=min_leaf,
        max_features=max_features, max_depth=max_depth,
    )
    matrices = importance_matrix(data, forest, threads=threads(ctx))
    write_importance(matrices, data.schema, out_importance, out_ranks)
    click.echo(f"Wrote {matrices.p}x{matrices.p} importance and rank matrices")
