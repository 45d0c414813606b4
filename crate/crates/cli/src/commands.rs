use anyhow::{anyhow, bail, Context, Result};
use nilspec::catalog::{expected_matrix, load_example, ExampleId, ExpectedRow, Flag, FlagStatus};
use nilspec::geometry::{integrate_geodesic, translation_defect, AdaptedFrame, GeodesicState, MetricSpec};
use nilspec::group::GClasses;
use nilspec::morphisms::{
    self, AlmostInnerKind, AutomorphismJson, AutomorphismSpec,
};
use nilspec::report::fmt_float;
use nilspec::scalar::parse_rational;
use nilspec::spectra::{
    self, ClassVerdict, HeisenbergFactor, MarkingSpec, ShootingOptions, SpectraError, Verdict,
};
use nilspec::{Algebra, Frame, Rational, SmallRational};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::output::{to_json, word, yes_no, Report, Table};
use crate::subject::Subject;

/// A finished command: the report and whether it met expectations.
pub struct Outcome {
    pub report: Report,
    pub matches: bool,
}

pub struct Settings {
    pub window: Option<i64>,
    pub lambda_max: f64,
    pub tol: f64,
}

impl Settings {
    fn window(&self, s: &Subject, command: &str) -> i64 {
        self.window.unwrap_or_else(|| s.default_window(command))
    }
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Same => "SAME",
        Verdict::Different => "DIFFERENT",
        Verdict::Inconclusive => "INCONCLUSIVE",
    }
}

/// Whether a verdict agrees with a tabulated flag that this tool can check.
fn expectation(flag: Option<Flag>, verdict: Verdict) -> (Value, bool) {
    match flag {
        Some(f) if f.status == FlagStatus::Verifiable => {
            let want = if f.value { Verdict::Same } else { Verdict::Different };
            (json!(verdict_str(want)), want == verdict)
        }
        Some(f) => (json!(format!("{} ({:?}, not checked)", verdict_str(if f.value { Verdict::Same } else { Verdict::Different }), f.status)), true),
        None => (Value::Null, true),
    }
}

// ---------------------------------------------------------------- lengths

pub fn lengths(s: &Subject, lattice: usize, cfg: &Settings) -> Result<Outcome> {
    let lat = s.lattice(lattice)?;
    let window = cfg.window(s, "lengths");
    let rep = spectra::length_spectrum(lat, &s.metric, window, cfg.lambda_max)?;
    let mut table = Table::new(&[
        "length",
        "length_symbolic",
        "m_total",
        "m_central",
        "m_noncentral",
        "m_quotient_central",
        "undecided",
    ]);
    for e in &rep.entries {
        table.push(vec![
            fmt_float(e.length),
            e.length_symbolic.clone().unwrap_or_default(),
            e.m_total.to_string(),
            e.m_central.to_string(),
            e.m_noncentral.to_string(),
            e.m_quotient_central.to_string(),
            e.undecided.to_string(),
        ]);
    }
    let summary = vec![format!(
        "{} {}: {} classes up to length {} from words with exponents in [-{window}, {window}]",
        s.name,
        rep.lattice,
        rep.classes_examined,
        fmt_float(cfg.lambda_max)
    )];
    Ok(Outcome {
        report: Report {
            json: to_json(&rep)?,
            table,
            summary,
        },
        matches: true,
    })
}

// ---------------------------------------------------------------- compare

pub fn compare_length(s: &Subject, cfg: &Settings) -> Result<Outcome> {
    let (a, b) = s.pair()?;
    let window = cfg.window(s, "compare-length");
    let c = spectra::compare_lengths(a, b, &s.metric, window, cfg.lambda_max)?;
    let (expected, matches) = expectation(s.expected.as_ref().map(|e| e.same_length_spectrum), c.verdict);
    let mut table = Table::new(&["length", "length_symbolic", "m1", "m2", "difference_min", "difference_max"]);
    for r in &c.rows {
        table.push(vec![
            fmt_float(r.length),
            r.length_symbolic.clone().unwrap_or_default(),
            r.m1.to_string(),
            r.m2.to_string(),
            r.difference_min.to_string(),
            r.difference_max.to_string(),
        ]);
    }
    let mut summary = vec![format!(
        "{}: length spectra {} ({} group classes, window {window})",
        s.name,
        verdict_str(c.verdict),
        c.keys.len()
    )];
    for r in c.rows.iter().filter(|r| r.difference_min > 0 || r.difference_max < 0) {
        summary.push(format!(
            "multiplicities differ at {}: {} vs {}",
            r.length_symbolic.clone().unwrap_or_else(|| fmt_float(r.length)),
            r.m1,
            r.m2
        ));
    }
    let mut json = to_json(&c)?;
    json["mode"] = json!("length");
    json["expected"] = expected;
    json["matches_expected"] = json!(matches);
    Ok(Outcome {
        report: Report { json, table, summary },
        matches,
    })
}

pub fn compare_marked(
    s: &Subject,
    automorphism: Option<AutomorphismSpec>,
    cfg: &Settings,
) -> Result<Outcome> {
    let (a, b) = s.pair()?;
    let window = cfg.window(s, "compare-marked");
    let flag = s.expected.as_ref().map(|e| e.same_marked_length_spectrum);
    let phi = automorphism.or_else(|| s.automorphisms.first().cloned());
    let (verdict, mut json, table, summary) = match (phi, &s.family) {
        (Some(phi), _) => {
            let spec = MarkingSpec::new(phi, a.clone(), b.clone())?;
            // Per-class table on a smaller window; the marking route covers the larger one.
            let table_window = window.min(2);
            let cmp = spectra::compare_marked(&spec, &s.metric, table_window, cfg.lambda_max, cfg.tol)?;
            let route = match cmp.verdict {
                Verdict::Different => None,
                _ => match spectra::one_dim_center_marking(&spec, &s.metric, window) {
                    Ok(r) => Some(r),
                    Err(SpectraError::PreconditionFail(_)) => None,
                    Err(e) => return Err(e.into()),
                },
            };
            let verdict = match &route {
                Some(r) if r.verdict == Verdict::Same => Verdict::Same,
                _ => cmp.verdict,
            };
            let mut table = Table::new(&["representative", "image", "verdict", "lengths"]);
            for r in &cmp.per_class {
                let ls: Vec<String> = r.lengths.known.iter().map(|l| l.symbolic().unwrap_or_else(|| fmt_float(l.value))).collect();
                table.push(vec![
                    word(&r.representative),
                    word(&r.image),
                    match r.verdict {
                        ClassVerdict::Same => "same",
                        ClassVerdict::Different => "different",
                        ClassVerdict::Undecided => "undecided",
                    }
                    .into(),
                    ls.join(" "),
                ]);
            }
            let mut summary = vec![format!(
                "{}: marked length spectra {} under {}",
                s.name,
                verdict_str(verdict),
                spec.automorphism.name
            )];
            summary.push(format!(
                "per-class comparison (window {table_window}): {}",
                verdict_str(cmp.verdict)
            ));
            if let Some(r) = &route {
                for c in &r.checks {
                    summary.push(format!("  {}: {} ({})", c.name, yes_no(c.holds), c.detail));
                }
            }
            let json = json!({
                "mode": "marked",
                "verdict": verdict,
                "automorphism": spec.automorphism.name,
                "per_class": to_json(&cmp.per_class)?,
                "per_class_window": table_window,
                "per_class_verdict": cmp.verdict,
                "one_dim_center": route.as_ref().map(to_json).transpose()?,
                "window": window,
                "lambda_max": cfg.lambda_max,
            });
            (verdict, json, table, summary)
        }
        (None, Some(family)) => {
            let r = spectra::one_dim_center_family(a, b, &s.metric, family, window)?;
            let mut table = Table::new(&["reason", "automorphisms"]);
            for (k, v) in &r.failure_reasons {
                table.push(vec![k.clone(), v.to_string()]);
            }
            let summary = vec![
                format!("{}: marked length spectra {}", s.name, verdict_str(r.verdict)),
                format!(
                    "{} automorphisms among {} family members; {} admit the factorization",
                    r.scan.automorphisms,
                    r.scan.scanned,
                    r.scan.satisfying.len()
                ),
            ];
            let mut json = to_json(&r)?;
            json["mode"] = json!("marked");
            (r.verdict, json, table, summary)
        }
        (None, None) => bail!("MissingAutomorphism: {} has no isomorphism to mark with; pass --automorphism-file", s.name),
    };
    let (expected, matches) = expectation(flag, verdict);
    json["expected"] = expected;
    json["matches_expected"] = json!(matches);
    Ok(Outcome {
        report: Report { json, table, summary },
        matches,
    })
}

pub fn load_automorphism(path: &str, dim: usize) -> Result<AutomorphismSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    let j: AutomorphismJson = serde_json::from_str(&text).with_context(|| format!("parsing {path}"))?;
    Ok(j.to_spec(dim)?)
}

// ----------------------------------------------------------------- verify

pub const CHECKS: [&str; 7] = [
    "jacobi",
    "step",
    "nonsingular",
    "automorphism",
    "almost-inner",
    "isometry",
    "factorization",
];

/// `name`, `name(arg)` or `name:arg`, optionally followed by `=pass` or `=fail`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckSpec {
    pub name: String,
    pub arg: Option<String>,
    pub expect_pass: bool,
}

impl CheckSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (body, expect_pass) = match s.rsplit_once('=') {
            Some((b, "pass")) => (b, true),
            Some((b, "fail")) => (b, false),
            Some((_, e)) => bail!("expectation must be pass or fail, got {e:?}"),
            None => (s, true),
        };
        let (name, arg) = if let Some((n, rest)) = body.split_once('(') {
            let a = rest
                .strip_suffix(')')
                .ok_or_else(|| anyhow!("unbalanced parenthesis in {s:?}"))?;
            (n, Some(a.to_string()))
        } else if let Some((n, a)) = body.split_once(':') {
            (n, Some(a.to_string()))
        } else {
            (body, None)
        };
        let name = name.trim().to_ascii_lowercase();
        if !CHECKS.contains(&name.as_str()) {
            bail!("UnknownCheck: {name:?}; expected one of {}", CHECKS.join(", "));
        }
        Ok(Self {
            name,
            arg,
            expect_pass,
        })
    }

    fn label(&self) -> String {
        match &self.arg {
            Some(a) => format!("{}({a})", self.name),
            None => self.name.clone(),
        }
    }
}

fn default_checks(s: &Subject) -> Vec<CheckSpec> {
    let mk = |n: &str, a: Option<&str>| CheckSpec {
        name: n.into(),
        arg: a.map(str::to_string),
        expect_pass: true,
    };
    let mut v = vec![mk("jacobi", None), mk("step", None), mk("nonsingular", None)];
    for a in s.automorphisms.iter().chain(&s.quotient_automorphisms) {
        v.push(mk("automorphism", Some(&a.name)));
    }
    if let Some(a) = s.automorphisms.first() {
        v.push(mk("factorization", Some(&a.name)));
    }
    v
}

struct QuotientData {
    quotient: nilspec::algebra::Quotient<Rational>,
    gram: Vec<Vec<Rational>>,
}

fn quotient_data(s: &Subject) -> Result<QuotientData> {
    let classes = GClasses::new(s.group.clone())?;
    let quotient = classes
        .quotient
        .ok_or_else(|| anyhow!("{} is not three-step; it has no quotient level", s.name))?;
    let gram = s.metric.quotient_metric(&quotient).gram;
    Ok(QuotientData { quotient, gram })
}

enum Level {
    Full,
    Quotient,
}

fn find_automorphism<'a>(s: &'a Subject, name: Option<&str>, prefer: Level) -> Result<(&'a AutomorphismSpec, Level)> {
    if let Some(n) = name {
        if let Some(a) = s.automorphisms.iter().find(|a| a.name == n) {
            return Ok((a, Level::Full));
        }
        if let Some(a) = s.quotient_automorphisms.iter().find(|a| a.name == n) {
            return Ok((a, Level::Quotient));
        }
        bail!("MissingAutomorphism: {} has no automorphism named {n:?}", s.name);
    }
    let pick = match prefer {
        Level::Full => s.automorphisms.first().map(|a| (a, Level::Full)),
        Level::Quotient => s.quotient_automorphisms.last().map(|a| (a, Level::Quotient)),
    };
    pick.or_else(|| s.automorphisms.first().map(|a| (a, Level::Full)))
        .ok_or_else(|| anyhow!("MissingAutomorphism: {} has no automorphisms", s.name))
}

fn run_check(s: &Subject, c: &CheckSpec, window: i64) -> Result<(bool, String, Value)> {
    let arg = c.arg.as_deref();
    Ok(match c.name.as_str() {
        "jacobi" => {
            let v = s.algebra.check_jacobi()?;
            let d = if v.is_empty() {
                "identity holds on every basis triple".to_string()
            } else {
                format!("{} basis triples violate the identity", v.len())
            };
            (v.is_empty(), d, json!({"violations": v.len()}))
        }
        "step" => {
            let want: usize = arg.map(str::parse).transpose().context("step expects an integer")?.unwrap_or(3);
            let step = s.algebra.step()?;
            (step == want, format!("step {step}, expected {want}"), json!({"step": step}))
        }
        "nonsingular" => {
            let v = s.algebra.strict_nonsingularity(64, 0x5eed);
            let d = format!("{} noncentral directions checked", v.certificates);
            (v.holds, d, json!({"certificates": v.certificates, "counterexample": v.counterexample.map(|x| x.iter().map(ToString::to_string).collect::<Vec<_>>())}))
        }
        "automorphism" => {
            let (a, level) = find_automorphism(s, arg, Level::Full)?;
            match level {
                Level::Full => {
                    let chk = morphisms::is_automorphism(&a.matrix, &s.algebra)?;
                    let carries = if chk.holds && s.lattices.len() >= 2 {
                        Some(MarkingSpec::new(a.clone(), s.lattices[0].clone(), s.lattices[1].clone()).is_ok())
                    } else {
                        None
                    };
                    let holds = chk.holds && carries != Some(false);
                    let d = match (chk.violation, carries) {
                        (Some((i, j)), _) => format!("bracket of basis pair ({i}, {j}) not preserved"),
                        (None, Some(true)) => "bracket preserved; generators of the first lattice map onto the second".into(),
                        (None, Some(false)) => "bracket preserved, but the lattices do not correspond".into(),
                        (None, None) => "bracket preserved".into(),
                    };
                    (holds, d, json!({"level": "full", "violation": chk.violation, "carries_lattice": carries}))
                }
                Level::Quotient => {
                    let q = quotient_data(s)?;
                    let chk = morphisms::is_automorphism(&a.matrix, &q.quotient.algebra)?;
                    let d = match chk.violation {
                        Some((i, j)) => format!("quotient bracket of basis pair ({i}, {j}) not preserved"),
                        None => "quotient bracket preserved".into(),
                    };
                    (chk.holds, d, json!({"level": "quotient", "violation": chk.violation}))
                }
            }
        }
        "isometry" => {
            let (a, level) = find_automorphism(s, arg, Level::Quotient)?;
            let holds = match level {
                Level::Full => morphisms::is_isometric_automorphism(&a.matrix, &s.metric.gram),
                Level::Quotient => morphisms::is_isometric_automorphism(&a.matrix, &quotient_data(s)?.gram),
            };
            let d = format!("{} {} the metric", a.name, if holds { "preserves" } else { "does not preserve" });
            (holds, d, json!({"automorphism": a.name}))
        }
        "almost-inner" => {
            let (a, level) = find_automorphism(s, arg, Level::Quotient)?;
            let lat = s.lattice(1)?;
            let v = match level {
                Level::Full => morphisms::is_gamma_almost_inner(&a.matrix, lat, window),
                Level::Quotient => {
                    let q = quotient_data(s)?;
                    let ql = lat.quotient_lattice(&q.quotient)?;
                    match ql.convert::<SmallRational>() {
                        Ok(small) => morphisms::is_gamma_almost_inner(&a.matrix_as::<SmallRational>(), &small, window),
                        Err(_) => morphisms::is_gamma_almost_inner(&a.matrix, &ql, window),
                    }
                }
            };
            let holds = v.kind != AlmostInnerKind::No;
            let d = format!("{:?}; {} lattice elements witnessed (window {window})", v.kind, v.witnessed);
            (holds, d, to_json(&v)?)
        }
        "factorization" => {
            let (a, level) = find_automorphism(s, arg, Level::Full)?;
            if !matches!(level, Level::Full) {
                bail!("factorization needs an automorphism of the full algebra");
            }
            let (l1, l2) = s.pair()?;
            let spec = MarkingSpec::new(a.clone(), l1.clone(), l2.clone())?;
            let r = spectra::one_dim_center_marking(&spec, &s.metric, window)?;
            let holds = r.verdict == Verdict::Same;
            let mut extra = to_json(&r)?;
            if let (Some(f), Some(psi1)) = (&r.factorization, s.quotient_automorphisms.first()) {
                let cat = AutomorphismJson::from_spec(psi1).matrix;
                extra["isometric_factor_matches"] = json!({"name": psi1.name, "equal": cat == f.isometry});
            }
            let d = r
                .checks
                .iter()
                .map(|c| format!("{}: {}", c.name, yes_no(c.holds)))
                .collect::<Vec<_>>()
                .join("; ");
            (holds, d, extra)
        }
        other => bail!("UnknownCheck: {other:?}"),
    })
}

pub fn verify(s: &Subject, checks: &[String], cfg: &Settings) -> Result<Outcome> {
    let specs: Vec<CheckSpec> = if checks.is_empty() {
        default_checks(s)
    } else {
        checks.iter().map(|c| CheckSpec::parse(c)).collect::<Result<_>>()?
    };
    let window = cfg.window(s, "verify");
    let mut table = Table::new(&["check", "expected", "outcome", "matches", "detail"]);
    let mut rows = Vec::new();
    let mut all = true;
    for c in &specs {
        let (holds, detail, evidence) = run_check(s, c, window)?;
        let matches = holds == c.expect_pass;
        all &= matches;
        let pf = |b: bool| if b { "pass" } else { "fail" };
        table.push(vec![c.label(), pf(c.expect_pass).into(), pf(holds).into(), yes_no(matches), detail.clone()]);
        rows.push(json!({
            "check": c.label(),
            "expected": pf(c.expect_pass),
            "outcome": pf(holds),
            "matches": matches,
            "detail": detail,
            "evidence": evidence,
        }));
    }
    let summary = vec![format!(
        "{}: {} of {} checks match expectations",
        s.name,
        rows.iter().filter(|r| r["matches"] == json!(true)).count(),
        rows.len()
    )];
    Ok(Outcome {
        report: Report {
            json: json!({"subject": s.name, "window": window, "checks": rows, "all_match": all}),
            table,
            summary,
        },
        matches: all,
    })
}

// --------------------------------------------------------------- geodesic

pub struct GeodesicArgs {
    pub velocity: Option<String>,
    pub seed: u64,
    pub s_max: f64,
    pub quotient: bool,
    pub heisenberg_factor: bool,
    pub gamma: Option<String>,
    pub period: Option<f64>,
    pub shoot: bool,
    pub bracket: Option<String>,
    pub starts: usize,
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| f(x.trim()).ok_or_else(|| anyhow!("cannot parse {x:?}")))
        .collect()
}

pub fn geodesic(s: &Subject, g: &GeodesicArgs, cfg: &Settings) -> Result<Outcome> {
    let mut algebra: Algebra = s.algebra.clone();
    let mut metric: MetricSpec = s.metric.clone();
    let mut space = "full group".to_string();
    if g.quotient || g.heisenberg_factor {
        let q = quotient_data(s)?;
        algebra = q.quotient.algebra.clone();
        metric = MetricSpec::from_gram(q.gram)?;
        space = "quotient by the last derived term".into();
    }
    let gamma_exact: Option<Vec<Rational>> = g
        .gamma
        .as_deref()
        .map(|x| parse_list(x, parse_rational))
        .transpose()?;
    if let Some(x) = &gamma_exact {
        if x.len() != algebra.dim {
            bail!("--gamma has {} entries; the {space} has dimension {}", x.len(), algebra.dim);
        }
    }
    // Bracket from the closed forms, computed before any change to the factor.
    let closed = gamma_exact
        .as_ref()
        .filter(|_| algebra.step().map_or(false, |k| k <= 2))
        .map(|x| spectra::two_step_lengths(&algebra, &metric.gram, x));
    let mut gamma_coords = gamma_exact.clone();
    if g.heisenberg_factor {
        let h = HeisenbergFactor::detect(&algebra, &metric.gram)?;
        let (ha, hm) = h.factor_algebra(&algebra);
        gamma_coords = gamma_coords.map(|x| h.factor_coordinates(&x));
        algebra = ha;
        metric = hm;
        space = "Heisenberg factor of the quotient".into();
    }
    let frame: Frame = AdaptedFrame::new(&algebra, &metric)?;
    let n = frame.dim();
    let gamma = gamma_coords.as_ref().map(|x| frame.from_structural_exact(x));

    if g.shoot {
        let gamma = gamma.ok_or_else(|| anyhow!("--shoot needs --gamma"))?;
        let bracket = match (&g.bracket, &closed) {
            (Some(b), _) => {
                let v = parse_list(b, |x| x.parse::<f64>().ok())?;
                if v.len() != 2 {
                    bail!("--bracket takes lo,hi");
                }
                (v[0], v[1])
            }
            (None, Some(l)) => (
                l.lower.value,
                l.upper.as_ref().map_or(cfg.lambda_max, |u| u.value),
            ),
            (None, None) => bail!("no closed-form bracket for this group; pass --bracket lo,hi"),
        };
        let opts = ShootingOptions {
            starts: g.starts,
            seed: g.seed,
            tol: cfg.tol,
            ..ShootingOptions::default()
        };
        let shots = spectra::shoot_multistart(&frame, &gamma, bracket, &opts)?;
        let inside = |l: f64| l >= bracket.0 - 1e-6 && l <= bracket.1 + 1e-6;
        let all_inside = shots.iter().all(|sh| inside(sh.lambda));
        let mut table = Table::new(&["lambda", "defect", "in_bracket"]);
        for sh in &shots {
            table.push(vec![fmt_float(sh.lambda), fmt_float(sh.defect), yes_no(inside(sh.lambda))]);
        }
        let summary = vec![
            format!("{} ({space}): {} translated geodesics found", s.name, shots.len()),
            format!("bracket [{}, {}]", fmt_float(bracket.0), fmt_float(bracket.1)),
        ];
        return Ok(Outcome {
            report: Report {
                json: to_json(&json!({
                    "space": space,
                    "bracket": [bracket.0, bracket.1],
                    "closed_form": closed,
                    "shots": shots,
                    "all_in_bracket": all_inside,
                }))?,
                table,
                summary,
            },
            matches: all_inside,
        });
    }

    let mut v: Vec<f64> = match &g.velocity {
        Some(v) => parse_list(v, |x| x.parse::<f64>().ok())?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
            (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()
        }
    };
    if v.len() != n {
        bail!("velocity has {} entries; the {space} has dimension {n}", v.len());
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        bail!("velocity must be nonzero");
    }
    v.iter_mut().for_each(|x| *x /= norm);
    let period = g.period.unwrap_or(g.s_max);
    let s_max = g.s_max.max(period);
    let traj = integrate_geodesic(&frame, &GeodesicState::at_identity(v.clone()), s_max, cfg.tol.min(1e-9))?;
    let defect = gamma.as_ref().map(|x| translation_defect(&frame, x, &traj, period));
    let end = traj.end();
    let mut table = Table::new(&[]);
    // CSV output is the trajectory itself.
    let csv = traj.to_csv();
    let mut lines = csv.lines();
    if let Some(h) = lines.next() {
        table.header = h.split(',').map(str::to_string).collect();
    }
    table.rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    let summary = vec![
        format!("{} ({space}): unit-speed geodesic from the identity, s in [0, {}]", s.name, fmt_float(s_max)),
        format!("max speed drift {}", fmt_float(traj.max_speed_drift)),
        match defect {
            Some(d) => format!("translation defect at period {}: {}", fmt_float(period), fmt_float(d)),
            None => "no gamma supplied".into(),
        },
    ];
    let json = to_json(&json!({
        "space": space,
        "velocity": v,
        "s_max": s_max,
        "step": traj.step,
        "samples": traj.states.len(),
        "max_speed_drift": traj.max_speed_drift,
        "end": {"position": end.position, "velocity": end.velocity},
        "period": gamma.as_ref().map(|_| period),
        "translation_defect": defect,
    }))?;
    Ok(Outcome {
        report: Report {
            json,
            table: Table {
                header: table.header,
                rows: table.rows,
            },
            summary,
        },
        matches: true,
    })
}

// ---------------------------------------------------------------- catalog

fn flag_cell(f: &Flag) -> String {
    let v = if f.value { "Yes" } else { "No" };
    match f.status {
        FlagStatus::Verifiable => v.to_string(),
        FlagStatus::Asserted => format!("{v}*"),
        FlagStatus::NonExecutable => format!("{v}+"),
    }
}

fn table_row(r: &ExpectedRow) -> Vec<String> {
    vec![
        r.id.to_string(),
        r.dim.to_string(),
        flag_cell(&r.same_p_form_spectrum),
        flag_cell(&r.representation_equivalent),
        flag_cell(&r.isomorphic_fundamental_groups),
        flag_cell(&r.same_length_spectrum),
        flag_cell(&r.same_marked_length_spectrum),
    ]
}

pub fn catalog(target: Option<&str>) -> Result<Outcome> {
    let ids: Vec<ExampleId> = match target {
        Some(t) => vec![t.parse()?],
        None => ExampleId::ALL.to_vec(),
    };
    let mut examples = Vec::new();
    for id in &ids {
        let ex = load_example(*id)?;
        let mut j = to_json(&ex.to_json())?;
        if let Some(f) = &ex.quotient_family {
            j["quotient_family"] = to_json(&f.to_json())?;
        }
        examples.push(j);
    }
    let mut table = Table::new(&[
        "example",
        "dim",
        "same p-form spectra",
        "representation equivalent",
        "isomorphic fundamental groups",
        "same length spectrum",
        "same marked length spectrum",
    ]);
    for r in expected_matrix().iter().filter(|r| ids.contains(&r.id)) {
        table.push(table_row(r));
    }
    let summary = vec![
        "Yes/No: checked by this tool; * recorded as published; + not executable here".to_string(),
    ];
    Ok(Outcome {
        report: Report {
            json: json!({ "examples": examples }),
            table,
            summary,
        },
        matches: true,
    })
}
