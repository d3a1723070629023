"""The make-figures command."""

import sys

import click

from .render import FIGURE_IDS, ArtifactError, render


@click.command()
@click.option("--run", "run_dir", required=True,
              help="Run directory containing the artifact files.")
@click.option("--fig", "fig_id", type=click.Choice(FIGURE_IDS), default=None,
              help="Render one figure kind (default: all of them).")
@click.option("--out", "out_dir", default="figs",
              help="Output directory for the images.")
def main(run_dir, fig_id, out_dir):
    """Render figures from a completed run directory."""
    kinds = [fig_id] if fig_id else list(FIGURE_IDS)
    for kind in kinds:
        try:
            path = render(run_dir, kind, out_dir)
        except ArtifactError as exc:
            click.echo(f"{kind}: {exc}", err=True)
            sys.exit(1)
        click.echo(f"wrote {path}")
    sys.exit(0)


if __name__ == "__main__":
    main()
