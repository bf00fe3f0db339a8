# commands/fit.py
import click

from config import get_config
from models.importance import ForestConfig
from services.artifact_service import read_plan, write_matrix, write_model, write_plan
from services.pipeline_service import estimate, fit_plan

from commands.options import (
    data_option, load_data, method_option, schema_option, seed_option, start_run, threads,
)


@click.command('fit')
@data_option
@schema_option
@click.option('--plan', 'plan_path', type=click.Path(dir_okay=False), default=None,
              help='Plan JSON; without it the whole pipeline runs.')
@method_option
@click.option('--lam', type=click.FloatRange(min=0.0), default=None, help='Fixed lambda for dgl.')
@click.option('--s', 's_value', type=click.FloatRange(min=0.0), default=None, help='Fixed penalty s for dsf.')
@click.option('--smax', type=click.IntRange(min=2), default=None, help='Largest clique to split off.')
@click.option('--folds', type=click.IntRange(min=2), default=None, help='Cross-validation folds.')
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), required=True, help='Model JSON.')
@click.option('--out-plan', type=click.Path(dir_okay=False), default=None,
              help='Also write the plan of an end-to-end run.')
@click.option('--out-ranks', type=click.Path(dir_okay=False), default=None,
              help='Also write the rank matrix of an end-to-end run.')
@seed_option
@click.pass_context
def fit_command(ctx, data_path, schema_path, plan_path, method, lam, s_value, smax, folds, out_path,
                out_plan, out_ranks, seed):
    """Fit a sparse log-linear model on a decomposition plan"""
    run = start_run(ctx, 'fit', method=method, lam=lam, s=s_value, smax=smax, folds=folds, seed=seed,
                    inputs={'data': data_path, 'plan': plan_path or ''}, outputs={'model': out_path})
    data = load_data(data_path, schema_path)
    if plan_path:
        plan = read_plan(plan_path)
        combined = fit_plan(data, plan, method, lam=lam, s=s_value, folds=run.folds, seed=seed,
                            threads=threads(ctx))
    else:
        forest = ForestConfig.from_config(get_config(), seed=seed)
        combined, plan, matrices = estimate(
            data, method, smax=run.smax, lam=lam, s=s_value, folds=run.folds, forest=forest,
            seed=seed, threads=threads(ctx),
        )
        if out_ranks:
            write_matrix(matrices.symmetric_ranks, data.schema.names, out_ranks)
    if out_plan:
        write_plan(plan, out_plan)
    write_model(combined, out_path)
    click.echo(
        f"Fitted {method}: {len(combined.model.nonzero_terms())} nonzero interaction blocks, "
        f"log Z = {combined.model.log_partition:.6f}"
    )
