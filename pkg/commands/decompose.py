# commands/decompose.py
import click

from services.artifact_service import read_matrix, write_plan
from services.decomposition_service import decompose

from commands.options import start_run


@click.command('decompose')
@click.option('--ranks', 'ranks_path', type=click.Path(dir_okay=False), required=True,
              help='Symmetrized rank matrix CSV written by `importance`.')
@click.option('--smax', type=click.IntRange(min=2), default=None, help='Largest clique to split off.')
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), required=True, help='Plan JSON.')
@click.pass_context
def decompose_command(ctx, ranks_path, smax, out_path):
    """Thin the complete graph by rank and split it into small cliques"""
    run = start_run(ctx, 'decompose', smax=smax, inputs={'ranks': ranks_path}, outputs={'plan': out_path})
    rtilde, _ = read_matrix(ranks_path)
    plan = decompose(rtilde, smax=run.smax)
    write_plan(plan, out_path)
    click.echo(f"Split {rtilde.shape[0]} variables into {len(plan.cliques)} cliques")
