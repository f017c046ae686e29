use std::path::Path;

use serde::Deserialize;
use serde_json::{json, Value};

use mmm::compact::{family_tightness, TightnessConfig};
use mmm::dmat::{exact_law_cost, sample_with};
use mmm::gen::{euclidean_cloud, kingman, moran, CoalescentConfig, MarkMap, MoranConfig};
use mmm::mgp::{mgp, MgpOptions};
use mmm::numeric::{derive_seed, stream_rng};
use mmm::poly::{default_panel, evaluate_exact, evaluate_mc, Polynomial};
use mmm::prohorov::{prohorov_exact, FinitePointMeasure};
use mmm::space::{self, canonicalize, validate_with_tolerance};
use mmm::stats::{convergence_table, two_sample_test, Target};
use mmm::{FiniteMmmSpace, MarkSpace, Matrix};

use crate::{Artifacts, Context, Failure, Model, Outcome, Panel, PanelArgs};

fn parse_space(ctx: &mut Context, path: &Path) -> Outcome<FiniteMmmSpace> {
    let text = ctx.read(path)?;
    mmm::io::space_from_json(&text).map_err(|e| Failure::from(e).with("path", json!(path.display().to_string())))
}

fn invalid_space(path: &Path, report: &mmm::space::ValidationReport) -> Failure {
    Failure::new("invalid_space", format!("{}: {report}", path.display())).with(
        "violations",
        serde_json::to_value(&report.violations).expect("violations serialize"),
    )
}

/// Reads a space and rejects it unless it passes validation.
fn load_space(ctx: &mut Context, path: &Path) -> Outcome<FiniteMmmSpace> {
    let space = parse_space(ctx, path)?;
    let report = space::validate(&space);
    if !report.is_valid() {
        return Err(invalid_space(path, &report));
    }
    Ok(space)
}

fn load_dir(ctx: &mut Context, dir: &Path) -> Outcome<Vec<FiniteMmmSpace>> {
    let files = ctx.list_json(dir)?;
    files.iter().map(|f| load_space(ctx, f)).collect()
}

fn parse_json<T: for<'de> Deserialize<'de>>(ctx: &mut Context, path: &Path) -> Outcome<T> {
    let text = ctx.read(path)?;
    serde_json::from_str(&text).map_err(|e| Failure::new("parse", format!("{}: {e}", path.display())))
}

fn json_line(v: &impl serde::Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string(v).expect("result serializes");
    s.push('\n');
    s.into_bytes()
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn panel(args: &PanelArgs, mark_space: &MarkSpace) -> Outcome<Vec<Polynomial>> {
    match args.panel {
        Panel::Default => Ok(default_panel(mark_space, args.n_max, args.panel_size)?),
    }
}

pub fn validate(ctx: &mut Context, path: &Path, tolerance: f64) -> Outcome<Artifacts> {
    let space = parse_space(ctx, path)?;
    let report = validate_with_tolerance(&space, tolerance);
    if !report.is_valid() {
        return Err(invalid_space(path, &report));
    }
    let v = json!({
        "valid": true,
        "points": space.len(),
        "label": space.label(),
        "ultrametric": space.is_ultrametric(tolerance),
    });
    Ok(Artifacts {
        primary: json_line(&v),
        ..Default::default()
    })
}

pub fn sample(ctx: &mut Context, path: &Path, n: usize, count: usize) -> Outcome<Artifacts> {
    let space = load_space(ctx, path)?;
    let mut rng = stream_rng(ctx.seed, 0);
    let mut primary = Vec::new();
    for _ in 0..count {
        let s = sample_with(&space, n, &mut rng)?;
        primary.extend(json_line(&s.to_json(space.mark_space())));
    }
    Ok(Artifacts {
        primary,
        ..Default::default()
    })
}

pub fn poly_eval(ctx: &mut Context, path: &Path, args: &PanelArgs, mc: usize, budget: u128) -> Outcome<Artifacts> {
    let space = load_space(ctx, path)?;
    let points = canonicalize(&space).len();
    let panel = panel(args, space.mark_space())?;
    let mut rows = Vec::with_capacity(panel.len());
    for (k, phi) in panel.iter().enumerate() {
        let exact = if exact_law_cost(points, phi.degree()) <= budget {
            evaluate_exact(phi, &space)?.to_string()
        } else {
            String::new()
        };
        let est = evaluate_mc(phi, &space, mc, derive_seed(ctx.seed, &[k as u64]))?;
        rows.push(vec![
            phi.description().to_string(),
            phi.degree().to_string(),
            exact,
            est.estimate.to_string(),
            est.stderr.to_string(),
        ]);
    }
    Ok(Artifacts {
        primary: csv_bytes(&["description", "degree", "exact", "mc_estimate", "stderr"], rows),
        ..Default::default()
    })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MetricFile {
    Rows(Vec<Vec<f64>>),
    Upper { n: usize, distances: Vec<f64> },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MeasureFile {
    Probs(Vec<f64>),
    Atoms(FinitePointMeasure),
}

impl MeasureFile {
    fn into_measure(self) -> FinitePointMeasure {
        match self {
            MeasureFile::Probs(probs) => FinitePointMeasure {
                atoms: (0..probs.len()).collect(),
                probs,
            },
            MeasureFile::Atoms(m) => m,
        }
    }
}

pub fn prohorov(ctx: &mut Context, metric: &Path, p: &Path, q: &Path) -> Outcome<Artifacts> {
    let metric = match parse_json::<MetricFile>(ctx, metric)? {
        MetricFile::Rows(rows) => Matrix::from_rows(&rows)?,
        MetricFile::Upper { n, distances } => Matrix::from_upper(n, &distances)?,
    };
    let p = parse_json::<MeasureFile>(ctx, p)?.into_measure();
    let q = parse_json::<MeasureFile>(ctx, q)?.into_measure();
    let result = prohorov_exact(&metric, &p, &q)?;
    Ok(Artifacts {
        primary: json_line(&result),
        ..Default::default()
    })
}

pub fn dist(ctx: &mut Context, a: &Path, b: &Path, opts: &MgpOptions) -> Outcome<Artifacts> {
    let a = load_space(ctx, a)?;
    let b = load_space(ctx, b)?;
    let result = mgp(&a, &b, opts)?;
    Ok(Artifacts {
        primary: json_line(&result),
        ..Default::default()
    })
}

pub fn tightness(
    ctx: &mut Context,
    dir: &Path,
    config: &TightnessConfig,
    verdicts: Option<&Path>,
) -> Outcome<Artifacts> {
    let spaces = load_dir(ctx, dir)?;
    let report = family_tightness(&spaces, config)?;
    let mut rows = Vec::new();
    for m in &report.modulus {
        rows.push(vec![
            "modulus".into(),
            m.eps.to_string(),
            m.delta.to_string(),
            String::new(),
            m.mass.to_string(),
        ]);
    }
    for (curve, points) in [
        ("distance_tail", &report.distance_tail),
        ("mark_tail", &report.mark_tail),
    ] {
        for t in points {
            rows.push(vec![
                curve.into(),
                String::new(),
                String::new(),
                t.at.to_string(),
                t.mass.to_string(),
            ]);
        }
    }
    let mut primary = csv_bytes(&["curve", "eps", "delta", "at", "value"], rows);
    let verdict_json = json!({"members": report.members, "verdicts": report.verdicts});
    let mut extra = Vec::new();
    match verdicts {
        Some(path) => extra.push((path.to_path_buf(), json_line(&verdict_json))),
        None => primary.extend(format!("# verdicts: {verdict_json}\n").into_bytes()),
    }
    Ok(Artifacts { primary, extra })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CloudParams {
    n: usize,
    dim: usize,
    #[serde(default = "default_mark_map")]
    mark_map: MarkMap,
}

fn default_mark_map() -> MarkMap {
    MarkMap::SignOfFirst
}

pub fn simulate(ctx: &mut Context, model: Model, params: Option<&Path>) -> Outcome<Artifacts> {
    let params: Value = match params {
        Some(p) => parse_json(ctx, p)?,
        None => json!({}),
    };
    let bad = |e: serde_json::Error| Failure::new("parse", format!("model parameters: {e}"));
    let with_defaults = |defaults: Value| {
        let mut merged = defaults;
        if let (Some(m), Some(p)) = (merged.as_object_mut(), params.as_object()) {
            for (k, v) in p {
                m.insert(k.clone(), v.clone());
            }
        }
        merged
    };
    let space = match model {
        Model::Kingman => {
            let mut c: CoalescentConfig =
                serde_json::from_value(with_defaults(json!({"leaves": 10, "theta": 1.0}))).map_err(bad)?;
            c.seed = ctx.seed;
            kingman(&c)?
        }
        Model::Moran => {
            let mut c: MoranConfig =
                serde_json::from_value(with_defaults(json!({"population": 10, "horizon": 10.0, "theta": 1.0})))
                    .map_err(bad)?;
            c.seed = ctx.seed;
            moran(&c)?
        }
        Model::Cloud => {
            let c: CloudParams = serde_json::from_value(with_defaults(json!({"n": 100, "dim": 2}))).map_err(bad)?;
            euclidean_cloud(c.n, c.dim, c.mark_map, ctx.seed)?
        }
    };
    let mut primary = mmm::io::space_to_json(&space).into_bytes();
    primary.push(b'\n');
    Ok(Artifacts {
        primary,
        ..Default::default()
    })
}

pub fn two_sample(ctx: &mut Context, a: &Path, b: &Path, n: usize, m: usize, perms: usize) -> Outcome<Artifacts> {
    let a = load_space(ctx, a)?;
    let b = load_space(ctx, b)?;
    let result = two_sample_test(&a, &b, n, m, perms, ctx.seed)?;
    Ok(Artifacts {
        primary: json_line(&result),
        ..Default::default()
    })
}

pub fn converge(
    ctx: &mut Context,
    dir: &Path,
    target: Option<&Path>,
    target_values: Option<&[f64]>,
    args: &PanelArgs,
    mc: usize,
) -> Outcome<Artifacts> {
    let seq = load_dir(ctx, dir)?;
    let target = match (target, target_values) {
        (Some(p), _) => Some(Target::Space(load_space(ctx, p)?)),
        (None, Some(v)) => Some(Target::Values(v.to_vec())),
        (None, None) => None,
    };
    let panel = panel(args, seq[0].mark_space())?;
    let table = convergence_table(&seq, target.as_ref(), &panel, mc, ctx.seed)?;
    let mut rows = Vec::new();
    for (r, label) in table.rows.iter().enumerate() {
        for (c, description) in table.columns.iter().enumerate() {
            let cell = table.cells[r][c];
            let (t, gap) = match (&table.target, &table.gaps) {
                (Some(t), Some(g)) => (t[c].estimate.to_string(), g[r][c].to_string()),
                _ => (String::new(), String::new()),
            };
            rows.push(vec![
                r.to_string(),
                label.clone(),
                c.to_string(),
                description.clone(),
                cell.estimate.to_string(),
                cell.stderr.to_string(),
                cell.exact.to_string(),
                t,
                gap,
            ]);
        }
    }
    let mut primary = csv_bytes(
        &[
            "row",
            "label",
            "column",
            "description",
            "estimate",
            "stderr",
            "exact",
            "target",
            "gap",
        ],
        rows,
    );
    if let Some(trends) = &table.trends {
        primary.extend(
            format!(
                "# trends: {}\n",
                serde_json::to_string(trends).expect("trends serialize")
            )
            .into_bytes(),
        );
    }
    Ok(Artifacts {
        primary,
        ..Default::default()
    })
}
