import marimo

__generated_with = "0.10.0"
app = marimo.App(width="medium")


@app.cell
def setup_imports_and_helpers():
    import marimo as mo
    import sys
    from pathlib import Path

    # Add src to path for local development
    sys.path.insert(0, str(Path(__file__).parent.parent))

    from src.analysis import MigrationAnalysis
    from src.exceptions import MigrationError
    from src.simulate import SimConfig, simulate_panel, simulation_weights
    from src.spatial import SpatialModel

    return (
        MigrationAnalysis,
        MigrationError,
        Path,
        SimConfig,
        SpatialModel,
        mo,
        simulate_panel,
        simulation_weights,
        sys,
    )


@app.cell
def title(mo):
    mo.md(
        "# Regional Net Migration\n\n"
        "Panel (fixed and random effects) and spatial (lag and error) estimation "
        "of the net migration equation on a simulated regional panel."
    )
    return


@app.cell
def scenario_header(mo):
    mo.md("---")
    mo.md("## 1. Scenario")
    return


@app.cell
def scenario_controls(mo):
    n_regions = mo.ui.slider(start=5, stop=49, value=20, label="Regions")
    n_periods = mo.ui.slider(start=1, stop=15, value=6, label="Usable periods")
    sigma_u = mo.ui.slider(start=0.0, stop=0.05, step=0.005, value=0.01, label="Region effect sd")
    rho = mo.ui.slider(start=0.0, stop=0.8, step=0.1, value=0.0, label="Spatial lag rho")
    seed = mo.ui.number(start=0, stop=2**31 - 1, value=20070101, label="Seed")
    mo.vstack([n_regions, n_periods, sigma_u, rho, seed])
    return n_periods, n_regions, rho, seed, sigma_u


@app.cell
def build_analysis(
    MigrationAnalysis,
    MigrationError,
    SimConfig,
    mo,
    n_periods,
    n_regions,
    rho,
    seed,
    sigma_u,
    simulate_panel,
    simulation_weights,
):
    analysis = config = panel = None
    status = ""
    try:
        config = SimConfig(
            n_regions=n_regions.value,
            n_periods=n_periods.value,
            sigma_u=sigma_u.value,
            rho=rho.value,
            master_seed=int(seed.value),
        )
        panel = simulate_panel(config)
        analysis = MigrationAnalysis(panel, simulation_weights(config))
        status = f"Simulated {len(panel.regions)} regions x {len(panel.years)} years."
    except MigrationError as exc:
        status = f"**Error:** {exc}"
    mo.md(status)
    return analysis, config, panel, status


@app.cell
def panel_header(mo):
    mo.md("---")
    mo.md("## 2. Panel estimates (LSDV and GLS)")
    return


@app.cell
def panel_table_display(MigrationError, analysis, mo):
    if analysis is None:
        panel_output = mo.md("*No panel available*")
    else:
        try:
            panel_output = mo.md(f"```\n{analysis.panel_report().render()}```")
        except MigrationError as exc:
            panel_output = mo.md(f"**Panel estimation failed:** {exc}")
    panel_output
    return (panel_output,)


@app.cell
def spatial_header(mo):
    mo.md("---")
    mo.md("## 3. Cross-section with spatial diagnostics")
    return


@app.cell
def cross_section_display(MigrationError, analysis, mo):
    if analysis is None:
        cross_output = mo.md("*No panel available*")
    else:
        try:
            diagnostics = analysis.diagnostics_report()
            search = analysis.specsearch_report()
            cross_output = mo.vstack(
                [mo.md(f"```\n{diagnostics.render()}```"), mo.md(f"```\n{search.render()}```")]
            )
        except MigrationError as exc:
            cross_output = mo.md(f"**Spatial analysis failed:** {exc}")
    cross_output
    return (cross_output,)


@app.cell
def data_header(mo):
    mo.md("---")
    mo.md("## 4. Regression variables")
    return


@app.cell
def variables_display(analysis, mo):
    variables_view = (
        mo.ui.table(analysis.variables.to_frame().reset_index())
        if analysis is not None
        else mo.md("*No panel available*")
    )
    variables_view
    return (variables_view,)


if __name__ == "__main__":
    app.run()
