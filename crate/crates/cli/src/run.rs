//! Command dispatch: each command turns a validated config into files.

use std::path::Path;

use fractal_degree::analytic::{AnalyticFn, Kernel};
use fractal_degree::corpus::extension_corpus;
use fractal_degree::counterexample::{
    build_um, build_vm, convergence_sweep, divergence_sweep, extension_norms, DivergenceReport, SequenceConfig,
    SweepOptions,
};
use fractal_degree::degree::{homotopy_stability_check, lp_norm, LpNorm};
use fractal_degree::fractal_gen::{build_generator, iterate_prefractal, Generator, LazyPrefractal};
use fractal_degree::holder::{extension_amplification, mollified_family, GridSamples};
use fractal_degree::stokes::{
    term_bound_audit, whitney_stokes_sum, BaseForm, MollifiedFormFamily, PolyForm, Residuals, StokesOptions,
    StokesSum, TermBoundAudit,
};
use fractal_degree::whitney::{
    box_dimension, whitney_decompose, whitney_dim, DimensionReport, PolygonDomain, WhitneyDecomposition, WhitneyRule,
};
use fractal_degree::{Point, Rect};
use serde::Serialize;

use crate::config::{Command, ExperimentConfig, FormSpec, GeneratorParams, ResidualMode};
use crate::error::CliResult;
use crate::output::{fmt_f, Manifest, OutputDir};
use crate::svg::{degree_color, Svg};

/// Validate `cfg`, run it into `out` and write the manifest.
///
/// An empty `m_range` skips the command entirely and leaves only the
/// manifest.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> CliResult<Manifest> {
    cfg.validate()?;
    let mut dir = OutputDir::create(out)?;
    if !cfg.is_empty_range() {
        execute(cfg, &mut dir)?;
    }
    dir.finish(cfg)
}

fn execute(cfg: &ExperimentConfig, dir: &mut OutputDir) -> CliResult<()> {
    let name = cfg.command.name();
    match cfg.command {
        Command::Gen => dir.timed(name, |d| gen(cfg, d)),
        Command::Prefractal => dir.timed(name, |d| prefractal(cfg, d)),
        Command::Dim => dir.timed(name, |d| dim(cfg, d)),
        Command::Whitney => dir.timed(name, |d| whitney(cfg, d)),
        Command::Degree => dir.timed(name, |d| degree(cfg, d)),
        Command::SweepDiverge => dir.timed(name, |d| sweep(cfg, d, false)),
        Command::SweepConverge => dir.timed(name, |d| sweep(cfg, d, true)),
        Command::Stokes => dir.timed(name, |d| stokes(cfg, d)),
        Command::Extend => dir.timed(name, |d| extend(cfg, d)),
        Command::Suite => suite(cfg, dir),
    }
}

/// Per-stage configs of the default suite, derived from `base`.
pub fn suite_stages(base: &ExperimentConfig) -> Vec<ExperimentConfig> {
    let stage = |command: Command| ExperimentConfig {
        command,
        m_range: None,
        m: None,
        k_max: None,
        ..base.clone()
    };
    vec![
        stage(Command::Gen),
        ExperimentConfig {
            m: Some(2),
            ..stage(Command::Prefractal)
        },
        ExperimentConfig {
            m: Some(6),
            box_scales: Some([3, 10]),
            whitney_m: Some(3),
            k_max: Some(10),
            ..stage(Command::Dim)
        },
        ExperimentConfig {
            m: Some(2),
            k_max: Some(9),
            ..stage(Command::Whitney)
        },
        ExperimentConfig {
            m: Some(1),
            ..stage(Command::Degree)
        },
        ExperimentConfig {
            m_range: Some(vec![0, 3]),
            ..stage(Command::SweepDiverge)
        },
        // The convergence regime needs p < n alpha / d, so this stage keeps
        // its own generator and exponent.
        ExperimentConfig {
            generator: Some(GeneratorParams { d: 1.5, alpha: 0.9 }),
            p: Some(1.0),
            alpha_prime: None,
            alpha_tilde: None,
            m_range: Some(vec![0, 2]),
            ..stage(Command::SweepConverge)
        },
        ExperimentConfig {
            m: Some(2),
            k_max: Some(9),
            ..stage(Command::Stokes)
        },
        ExperimentConfig {
            m_range: Some(vec![0, 1]),
            grid: 15,
            ..stage(Command::Extend)
        },
    ]
}

fn suite(cfg: &ExperimentConfig, dir: &mut OutputDir) -> CliResult<()> {
    for stage in suite_stages(cfg) {
        stage.validate()?;
        let name = stage.command.name();
        dir.scoped(name, |d| execute(&stage, d))?;
    }
    Ok(())
}

fn generator(cfg: &ExperimentConfig) -> CliResult<Generator> {
    let g = cfg.generator();
    Ok(build_generator(g.d, g.alpha)?)
}

fn sequence_config(cfg: &ExperimentConfig, gen: &Generator) -> CliResult<SequenceConfig> {
    Ok(SequenceConfig::for_generator(gen, cfg.p())?.with_overrides(cfg.alpha_prime, cfg.alpha_tilde)?)
}

#[derive(Serialize)]
struct GeneratorChecks {
    dimension_residual: f64,
    ratio_below_half: bool,
    holder_condition: f64,
    holder_condition_holds: bool,
}

fn gen(cfg: &ExperimentConfig, dir: &mut OutputDir) -> CliResult<()> {
    let g = generator(cfg)?;
    let holder = 2.0 * g.r.powf(1.0 - g.alpha);
    dir.json("generator.json", &g)?;
    dir.json(
        "generator_checks.json",
        &GeneratorChecks {
            dimension_residual: g.dimension_residual(),
            ratio_below_half: g.r < 0.5,
            holder_condition: holder,
            holder_condition_holds: holder <= 1.0,
        },
    )
}

fn boundary_svg(vertices: &[Point]) -> String {
    let mut svg = Svg::new(Rect::new(-0.5, -0.5, 1.5, 1.5), 800.0);
    svg.polyline(vertices, "black", 1.0);
    svg.finish()
}

#[derive(Serialize)]
struct PrefractalSummary {
    level: usize,
    edges: usize,
    edge_length: f64,
    area: f64,
}

fn prefractal(cfg: &ExperimentConfig, dir: &mut OutputDir) -> CliResult<()> {
    let g = generator(cfg)?;
    let pf = iterate_prefractal(&g, cfg.level(2))?;
    let rows: Vec<Vec<String>> = pf.vertices[..pf.vertices.len() - 1]
        .iter()
        .enumerate()
        .map(|(k, p)| vec![k.to_string(), fmt_f(p.x), fmt_f(p.y)])
        .collect();
    dir.csv("prefractal.csv", &["vertex_index", "x", "y"], &rows)?;
    dir.text("prefractal.svg", &boundary_svg(&pf.vertices))?;
    dir.json(
        "prefractal.json",
        &PrefractalSummary {
            level: pf.level,
            edges: pf.edge_count(),
            edge_length: pf.edge_length,
            area: pf.area(),
        },
    )
}

fn whitney_count_rows(wd: &WhitneyDecomposition) -> Vec<Vec<String>> {
    wd.counts().into_iter().map(|(k, c)| vec![k.to_string(), c.to_string()]).collect()
}

#[derive(Serialize)]
struct DimensionSummary {
    target: f64,
    level: usize,
    whitney_level: usize,
    box_count: DimensionReport,
    whitney: DimensionReport,
    box_error: f64,
    whitney_error: f64,
    agreement: f64,
}

fn dim(cfg: &ExperimentConfig, dir: &mut OutputDir) -> CliResult<()> {
    let g = generator(cfg)?;
    let m = cfg.level(8);
    let [lo, hi] = cfg.box_scales.unwrap_or([3, 13]);
    let lazy = LazyPrefractal::new(&g, m);
    let scales: Vec<f64> = (lo..=hi).map(|k| 2f64.powi(-k)).collect();
    let counts: Vec<u64> = scales.iter().map(|&s| lazy.box_count(s)).collect();
    let rows: Vec<Vec<String>> = scales
        .iter()
        .zip(&counts)
        .map(|(s, c)| vec![fmt_f(*s), c.to_string()])
        .collect();
    dir.csv("box_counts.csv", &["r", "N_r"], &rows)?;
    let boxes = box_dimension(&scales, &counts)?;

    let mw = cfg.whitney_m.unwrap_or(m.min(5));
    let wd = whitney_decompose(&LazyPrefractal::new(&g, mw), cfg.k_max_or(12), WhitneyRule::MaximalAdmissible)?;
    dir.csv("whitney_counts.csv", &["level", "count"], &whitney_count_rows(&wd))?;
    let wdim = whitney_dim(&wd)?;
    dir.json(
        "dimension.json",
        &DimensionSummary {
            target: g.target_dim,
            level: m,
            whitney_level: mw,
            box_error: (boxes.slope - g.target_dim).abs(),
            whitney_error: (wdim.slope - g.target_dim).abs(),
            agreement: (boxes.slope - wdim.slope).abs(),
            box_count: boxes,
            whitney: wdim,
        },
    )
}

#[derive(Serialize)]
struct WhitneySummary {
    level: usize,
    k_min: i32,
    k_max: i32,
    cubes: usize,
    covered_area: f64,
    residual_area: f64,
    residual_cubes: usize,
    domain_area: f64,
    lower_violations: usize,
    upper_violations: usize,
    disjoint: bool,
    dimension: Option<DimensionReport>,
}

fn whitney(cfg: &ExperimentConfig, dir: &mut OutputDir) -> CliResult<()> {
    let g = generator(cfg)?;
    let m = cfg.level(3);
    let lazy = LazyPrefractal::new(&g, m);
    let wd = whitney_decompose(&lazy, cfg.k_max_or(10), WhitneyRule::MaximalAdmissible)?;
    dir.csv("whitney_counts.csv", &["level", "count"], &whitney_count_rows(&wd))?;
    dir.json(
        "whitney.json",
        &WhitneySummary {
            level: m,
            k_min: wd.k_min,
            k_max: wd.k_max,
            cubes: wd.cube_count(),
            covered_area: wd.covered_area(),
            residual_area: wd.residual_area(),
            residual_cubes: wd.residual.len(),
            domain_area: lazy.shoelace_area(),
            lower_violations: wd.lower_violations,
            upper_violations: wd.upper_violations,
            disjoint: wd.check_disjoint(),
            dimension: whitney_dim(&wd).ok(),
        },
    )?;
    let mut svg = Svg::new(Rect::new(-0.5, -0.5, 1.5, 1.5), 800.0);
    for c in wd.cubes() {
        svg.rect(&c.cube.rect(), "#dde6f5", Some("#3b5b92"));
    }
    for c in &wd.residual {
        svg.rect(&c.rect(), "#f5c6c6", None);
    }
    if let Ok(v) = lazy.vertices() {
        svg.polyline(&v, "black", 1.0);
    }
    dir.text("whitney.svg", &svg.finish())
}

#[derive(Serialize)]
struct DegreeSummary {
    m: usize,
    p: f64,
    alpha_tilde: f64,
    q_count: i64,
    h: f64,
    lp_exact: f64,
    quadrature: LpNorm,
    bracket_contains_exact: bool,
    relative_width: f64,
    homotopy_stable: Option<bool>,
}

fn degree(cfg: &ExperimentConfig, dir: &mut OutputDir) -> CliResult<()> {
    let g = generator(cfg)?;
    let seq = sequence_config(cfg, &g)?;
    let m = cfg.level(1);
    let vm = build_vm(&g, m, seq.alpha_tilde, cfg.samples)?;
    let field = vm.degree_field(cfg.h_divisor)?;
    let lp = lp_norm(&field, seq.p)?;
    let rows: Vec<Vec<String>> = field
        .cells()
        .map(|(i, j, v)| {
            vec![
                i.to_string(),
                j.to_string(),
                v.map_or_else(|| "NaN".to_string(), |x| x.to_string()),
            ]
        })
        .collect();
    dir.csv("degree_field.csv", &["ix", "iy", "value"], &rows)?;

    // Perturbation stability of the degree at the loop centre, on maps small
    // enough to materialize.
    let homotopy_stable = if m <= 1 {
        let bm = vm.boundary_map(&iterate_prefractal(&g, m)?)?;
        let delta = 0.25 * bm.winding_index()?.distance(Point::ORIGIN);
        Some(homotopy_stability_check(&bm, delta, Point::ORIGIN, cfg.seed)?)
    } else {
        None
    };
    let exact = vm.lp_exact(seq.p);
    dir.json(
        "lp_report.json",
        &DegreeSummary {
            m,
            p: seq.p,
            alpha_tilde: seq.alpha_tilde,
            q_count: vm.q_count(),
            h: field.h(),
            lp_exact: exact,
            bracket_contains_exact: lp.contains(exact),
            relative_width: lp.relative_width(),
            quadrature: lp,
            homotopy_stable,
        },
    )?;

    let vmax = field.cells().filter_map(|(_, _, v)| v).map(i64::abs).max().unwrap_or(0);
    let mut svg = Svg::new(field.rect(), 800.0);
    let h = field.h();
    for (i, j, v) in field.cells() {
        let c = field.cell_center(i, j);
        let r = Rect::new(c.x - 0.5 * h, c.y - 0.5 * h, c.x + 0.5 * h, c.y + 0.5 * h);
        match v {
            Some(0) => {}
            Some(x) => svg.rect(&r, &degree_color(x, vmax), None),
            None => svg.rect(&r, "#888888", None),
        }
    }
    svg.polyline(&vm.loop_curve(), "black", 1.0);
    dir.text("degree.svg", &svg.finish())
}

fn divergence_rows(rep: &DivergenceReport) -> Vec<Vec<String>> {
    rep.rows
        .iter()
        .map(|r| {
            vec![
                r.m.to_string(),
                fmt_f(r.sup_vm),
                fmt_f(r.seminorm),
                fmt_f(r.eps_m),
                r.q_count.to_string(),
                fmt_f(r.lp_exact),
                fmt_f(r.lp_quad_lo),
                fmt_f(r.lp_quad_hi),
                fmt_f(r.ratio),
            ]
        })
        .collect()
}

pub const DIVERGENCE_HEADER: [&str; 9] = [
    "m",
    "sup_vm",
    "seminorm",
    "eps_m",
    "q_count",
    "lp_exact",
    "lp_quad_lo",
    "lp_quad_hi",
    "ratio",
];

#[derive(Serialize)]
struct SweepSummary<'a> {
    report: &'a DivergenceReport,
    norms_increasing: bool,
    norms_decreasing: bool,
    brackets_hold: bool,
    normalized_seminorms: Vec<f64>,
}

fn sweep(cfg: &ExperimentConfig, dir: &mut OutputDir, converge: bool) -> CliResult<()> {
    let g = generator(cfg)?;
    let seq = sequence_config(cfg, &g)?;
    let opts = SweepOptions {
        samples: cfg.samples,
        h_divisor: cfg.h_divisor,
    };
    let Some(levels) = cfg.levels(if converge { 0..=3 } else { 0..=4 }) else {
        return Ok(());
    };
    let (rep, stem) = if converge {
        (convergence_sweep(&g, &seq, levels, &opts)?, "convergence")
    } else {
        (divergence_sweep(&g, &seq, levels, &opts)?, "divergence")
    };
    dir.csv(&format!("{stem}.csv"), &DIVERGENCE_HEADER, &divergence_rows(&rep))?;
    dir.json(
        &format!("{stem}.json"),
        &SweepSummary {
            report: &rep,
            norms_increasing: rep.norms_increasing(),
            norms_decreasing: rep.norms_decreasing(),
            brackets_hold: rep.brackets_hold(),
            normalized_seminorms: rep.normalized_seminorms(),
        },
    )?;
    // Image curves of v_m: one loop per level, shared by all its edges.
    let mut curves = Vec::new();
    for r in &rep.rows {
        curves.push(build_vm(&g, r.m, seq.alpha_tilde, cfg.samples)?.loop_curve());
    }
    if let Some(outer) = curves.first() {
        let bb = Rect::bounding(outer).expect("non-empty curve").expand(0.05);
        let mut svg = Svg::new(bb, 800.0);
        for c in &curves {
            svg.polyline(c, "black", 1.0);
        }
        dir.text("vm_curves.svg", &svg.finish())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct StokesSummary<'a> {
    level: usize,
    k_max: i32,
    form: &'a FormSpec,
    kernel: Kernel,
    theta: f64,
    residuals: ResidualMode,
    sum: &'a StokesSum,
    error_bound: f64,
    /// Shoelace area of the pre-fractal for the area form.
    reference: Option<f64>,
    relative_error: Option<f64>,
    tail_ratio: Option<f64>,
    expected_tail_ratio: Option<f64>,
    audit: &'a TermBoundAudit,
}

fn stokes(cfg: &ExperimentConfig, dir: &mut OutputDir) -> CliResult<()> {
    let g = generator(cfg)?;
    let m = cfg.level(2);
    let lazy = LazyPrefractal::new(&g, m);
    let wd = whitney_decompose(&lazy, cfg.k_max_or(10), WhitneyRule::MaximalAdmissible)?;
    let base = match &cfg.form {
        FormSpec::Area => BaseForm::Poly(PolyForm::area()),
        FormSpec::Weierstrass { alpha, kmax } => BaseForm::Pair {
            u1: AnalyticFn::weierstrass(*alpha, *kmax, 0),
            u2: AnalyticFn::coordinate(1),
        },
    };
    let mf = MollifiedFormFamily::for_decomposition(base, cfg.kernel, cfg.theta, &wd)?;
    let poly;
    let residuals = match cfg.residuals {
        ResidualMode::Bracket => Residuals::Bracket,
        ResidualMode::Clip => {
            poly = PolygonDomain::new(&lazy.vertices()?)?;
            Residuals::Clip(&poly)
        }
    };
    let sum = whitney_stokes_sum(&mf, &wd, residuals, &StokesOptions { quadrature_check: true })?;
    let audit = term_bound_audit(&mf, &wd, None)?;
    let rows: Vec<Vec<String>> = sum
        .levels
        .iter()
        .map(|l| {
            vec![
                l.level.to_string(),
                fmt_f(l.area_term_sum),
                fmt_f(l.boundary_term_sum),
                fmt_f(l.tail_bound),
            ]
        })
        .collect();
    dir.csv(
        "stokes_levels.csv",
        &["level", "area_term_sum", "boundary_term_sum", "tail_bound"],
        &rows,
    )?;
    let (reference, expected) = match cfg.form {
        FormSpec::Area => (Some(lazy.shoelace_area()), Some(2f64.powf(g.target_dim - 2.0))),
        FormSpec::Weierstrass { .. } => (None, None),
    };
    let fit_lo = (wd.k_min + 2).max(4);
    let tail_ratio = if wd.k_max - 1 >= fit_lo + 2 {
        sum.tail_ratio(fit_lo, wd.k_max - 1).ok()
    } else {
        None
    };
    dir.json(
        "stokes.json",
        &StokesSummary {
            level: m,
            k_max: wd.k_max,
            form: &cfg.form,
            kernel: cfg.kernel,
            theta: cfg.theta,
            residuals: cfg.residuals,
            sum: &sum,
            error_bound: sum.error_bound(),
            relative_error: reference.map(|a| (sum.value - a).abs() / a),
            reference,
            tail_ratio,
            expected_tail_ratio: expected,
            audit: &audit,
        },
    )?;
    let arows: Vec<Vec<String>> = audit
        .levels
        .iter()
        .map(|l| vec![l.level.to_string(), fmt_f(l.area_ratio), fmt_f(l.boundary_ratio)])
        .collect();
    dir.csv("audit.csv", &["level", "area_ratio", "boundary_ratio"], &arows)
}

fn extend(cfg: &ExperimentConfig, dir: &mut OutputDir) -> CliResult<()> {
    let g = generator(cfg)?;
    let seq = sequence_config(cfg, &g)?;
    let mut rows = Vec::new();
    if let Some(levels) = cfg.levels(0..=2) {
        for m in levels {
            let vm = build_vm(&g, m, seq.alpha_tilde, cfg.samples)?;
            let um = build_um(&g, &vm, m + 1)?;
            let e = extension_norms(&um, g.alpha, cfg.grid)?;
            rows.push(vec![
                e.m.to_string(),
                e.l.to_string(),
                e.sites.to_string(),
                e.queries.to_string(),
                fmt_f(e.sup_um),
                fmt_f(e.seminorm_um.seminorm),
                fmt_f(e.sup_ext),
                fmt_f(e.seminorm_ext.seminorm),
                fmt_f(e.norm_ext()),
                fmt_f(e.amplification()),
                fmt_f(e.pou_error),
            ]);
        }
    }
    dir.csv(
        "extension_um.csv",
        &[
            "m",
            "l",
            "sites",
            "queries",
            "sup_um",
            "seminorm_um",
            "sup_ext",
            "seminorm_ext",
            "norm_ext",
            "amplification",
            "pou_error",
        ],
        &rows,
    )?;

    let mut rows = Vec::new();
    for c in extension_corpus()? {
        let r = extension_amplification(&c.f, c.alpha, &c.queries)?;
        rows.push(vec![
            c.name.to_string(),
            fmt_f(c.alpha),
            c.f.len().to_string(),
            r.queries.to_string(),
            fmt_f(r.seminorm_f),
            fmt_f(r.seminorm_ext),
            fmt_f(r.amplification),
            fmt_f(r.pou_error),
            fmt_f(r.interpolation_error),
        ]);
    }
    dir.csv(
        "extension_corpus.csv",
        &[
            "name",
            "alpha",
            "sites",
            "queries",
            "seminorm_f",
            "seminorm_ext",
            "amplification",
            "pou_error",
            "interpolation_error",
        ],
        &rows,
    )?;

    let w = AnalyticFn::weierstrass(0.5, 8, 0);
    let grid = GridSamples::from_fn_2d(Point::ORIGIN, 1.0 / 64.0, 65, 65, |p| {
        use fractal_degree::analytic::ScalarField;
        w.value(p)
    })?;
    let scales: Vec<f64> = (1..=4).map(|k| 2f64.powi(-k)).collect();
    let fam = mollified_family(&grid, 0.5, &scales)?;
    let rows: Vec<Vec<String>> = fam
        .rows
        .iter()
        .map(|r| vec![fmt_f(r.t), fmt_f(r.sup_diff), fmt_f(r.c1_bound), fmt_f(r.dt_bound)])
        .collect();
    dir.csv("mollified.csv", &["t", "sup_diff", "c1_bound", "dt_bound"], &rows)
}
