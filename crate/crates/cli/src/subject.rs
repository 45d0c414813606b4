//! What a command runs on: a built-in example or a JSON input file.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nilspec::algebra::AlgebraJson;
use nilspec::catalog::{load_example, ExampleId, ExpectedRow};
use nilspec::geometry::MetricJson;
use nilspec::group::{LatticeJson, NilpotentGroup};
use nilspec::morphisms::{AutomorphismJson, AutomorphismSpec, ParamTemplate};
use nilspec::{Algebra, Group, Lattice, Metric};
use serde_json::Value;

pub struct Subject {
    pub name: String,
    pub id: Option<ExampleId>,
    pub algebra: Algebra,
    pub group: Group,
    pub metric: Metric,
    pub lattices: Vec<Lattice>,
    pub automorphisms: Vec<AutomorphismSpec>,
    pub quotient_automorphisms: Vec<AutomorphismSpec>,
    pub family: Option<ParamTemplate>,
    pub expected: Option<ExpectedRow>,
}

impl Subject {
    /// `target` is an example id (`I`..`V`) or a path to a JSON file.
    pub fn load(target: &str) -> Result<Self> {
        if let Ok(id) = target.parse::<ExampleId>() {
            let ex = load_example(id)?;
            return Ok(Self {
                name: format!("Example {id}"),
                id: Some(id),
                algebra: ex.algebra,
                group: ex.group,
                metric: ex.metric,
                lattices: ex.lattices,
                automorphisms: ex.automorphisms,
                quotient_automorphisms: ex.quotient_automorphisms,
                family: ex.quotient_family,
                expected: Some(ex.expected),
            });
        }
        let path = Path::new(target);
        if !path.exists() {
            bail!("{target:?} is neither an example id (I..V) nor a readable file");
        }
        let text = fs::read_to_string(path).with_context(|| format!("reading {target}"))?;
        let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {target}"))?;
        // `catalog --format json` wraps records in an `examples` array.
        match v.get("examples").and_then(|e| e.get(0)) {
            Some(first) => Self::from_json(first, target),
            None => Self::from_json(&v, target),
        }
    }

    /// Accepts the same layout `catalog` emits; `expected` and `id` are ignored.
    pub fn from_json(v: &Value, name: &str) -> Result<Self> {
        let field = |k: &str| v.get(k).cloned().ok_or_else(|| anyhow!("input lacks {k:?}"));
        let aj: AlgebraJson = serde_json::from_value(field("algebra")?)?;
        let algebra: Algebra = aj.to_algebra()?;
        let group = NilpotentGroup::new(algebra.clone())?;
        let metric = match v.get("metric") {
            Some(m) => serde_json::from_value::<MetricJson>(m.clone())?.to_spec()?,
            None => Metric::standard(algebra.dim),
        };
        let lj: Vec<LatticeJson> = serde_json::from_value(field("lattices")?)?;
        let lattices = lj
            .iter()
            .map(|l| Lattice::new(group.clone(), l.to_spec()?))
            .collect::<Result<Vec<_>, _>>()?;
        let autos = |k: &str, dim: usize| -> Result<Vec<AutomorphismSpec>> {
            match v.get(k) {
                None => Ok(vec![]),
                Some(a) => serde_json::from_value::<Vec<AutomorphismJson>>(a.clone())?
                    .iter()
                    .map(|j| j.to_spec(dim).map_err(Into::into))
                    .collect(),
            }
        };
        let automorphisms = autos("automorphisms", algebra.dim)?;
        let quotient_dim = v
            .get("quotient_automorphisms")
            .and_then(|a| a.get(0))
            .and_then(|a| a.get("matrix"))
            .and_then(Value::as_array)
            .map_or(0, Vec::len);
        let quotient_automorphisms = autos("quotient_automorphisms", quotient_dim)?;
        Ok(Self {
            name: name.to_string(),
            id: None,
            algebra,
            group,
            metric,
            lattices,
            automorphisms,
            quotient_automorphisms,
            family: None,
            expected: None,
        })
    }

    /// Lattice by 1-based index.
    pub fn lattice(&self, index: usize) -> Result<&Lattice> {
        if index == 0 || index > self.lattices.len() {
            bail!("lattice index {index} out of range 1..={}", self.lattices.len());
        }
        Ok(&self.lattices[index - 1])
    }

    pub fn pair(&self) -> Result<(&Lattice, &Lattice)> {
        if self.lattices.len() < 2 {
            bail!("{} has fewer than two lattices", self.name);
        }
        Ok((&self.lattices[0], &self.lattices[1]))
    }

    /// Default window per command and example, chosen so each run stays in seconds.
    pub fn default_window(&self, command: &str) -> i64 {
        use ExampleId::*;
        match (command, self.id) {
            ("lengths", Some(IV)) => 14,
            ("lengths", Some(III)) => 4,
            ("compare-length", Some(IV)) => 7,
            ("compare-marked", Some(V)) => 4,
            ("compare-marked", Some(II)) => 2,
            ("verify", Some(V)) => 4,
            ("compare-marked", _) | ("verify", _) => 2,
            _ => 3,
        }
    }
}
