//! Time-series data model, CSV ingestion and context extraction.
//!
//! A [`TimeSeries`] is an ordered sequence of [`Block`]s indexed `t = 1..N`.
//! Each block is one experiment: treatment node(s), optional intermediate
//! covariate nodes, an outcome in `[0, 1]` and trailing covariates that only
//! enter the history of later blocks. A [`ContextSpec`] declares the
//! fixed-dimension summary of the past that conditions block `t`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};

/// Column layout of a series.
///
/// Within a block the node order is `A(0), L(1), A(1), ..., L(K), A(K), Y, W`.
/// `intermediates[j]` holds the names of the covariates in `L(j + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    #[serde(default = "default_treatments")]
    pub treatments: Vec<String>,
    #[serde(default)]
    pub intermediates: Vec<Vec<String>>,
    #[serde(default = "default_outcome")]
    pub outcome: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Known treatment probabilities `P(A(t, j) = 1 | past)`, one column per
    /// treatment node, or empty when the mechanism is unknown.
    #[serde(default)]
    pub g_prob: Vec<String>,
}

fn default_treatments() -> Vec<String> {
    vec!["a".to_string()]
}

fn default_outcome() -> String {
    "y".to_string()
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            treatments: default_treatments(),
            intermediates: Vec::new(),
            outcome: default_outcome(),
            covariates: Vec::new(),
            g_prob: Vec::new(),
        }
    }
}

/// Resolved reference to one variable of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRef {
    Treatment(usize),
    Intermediate(usize, usize),
    Outcome,
    Covariate(usize),
}

impl Schema {
    /// Single-treatment schema `t,a,y,<covariates>`.
    pub fn simple<S: Into<String>>(covariates: impl IntoIterator<Item = S>) -> Self {
        Schema {
            covariates: covariates.into_iter().map(Into::into).collect(),
            ..Schema::default()
        }
    }

    pub fn with_known_g(mut self) -> Self {
        self.g_prob = if self.treatments.len() == 1 {
            vec!["g_prob".to_string()]
        } else {
            self.treatments.iter().map(|a| format!("g_prob_{a}")).collect()
        };
        self
    }

    /// Number of intervention nodes minus one.
    pub fn k(&self) -> usize {
        self.treatments.len().saturating_sub(1)
    }

    pub fn has_known_g(&self) -> bool {
        !self.g_prob.is_empty()
    }

    /// Infers a single-treatment schema from a CSV header.
    pub fn infer(header: &[String]) -> Result<Self> {
        for required in ["t", "a", "y"] {
            if !header.iter().any(|h| h == required) {
                return Err(Error::Schema(format!("header is missing column `{required}`")));
            }
        }
        let mut schema = Schema::default();
        for h in header {
            match h.as_str() {
                "t" | "a" | "y" => {}
                "g_prob" => schema.g_prob = vec!["g_prob".to_string()],
                other => schema.covariates.push(other.to_string()),
            }
        }
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.treatments.is_empty() {
            return Err(Error::Schema("at least one treatment node is required".into()));
        }
        if self.intermediates.len() != self.k() {
            return Err(Error::Schema(format!(
                "{} treatment nodes need {} intermediate covariate groups, found {}",
                self.treatments.len(),
                self.k(),
                self.intermediates.len()
            )));
        }
        if !self.g_prob.is_empty() && self.g_prob.len() != self.treatments.len() {
            return Err(Error::Schema(format!(
                "expected {} g_prob columns, found {}",
                self.treatments.len(),
                self.g_prob.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in self.all_columns() {
            if name == "t" || !seen.insert(name.clone()) {
                return Err(Error::Schema(format!("duplicate or reserved column name `{name}`")));
            }
        }
        Ok(())
    }

    /// Data columns in file order, excluding `t`.
    pub fn all_columns(&self) -> Vec<String> {
        let mut cols = Vec::new();
        for (j, a) in self.treatments.iter().enumerate() {
            if j > 0 {
                cols.extend(self.intermediates[j - 1].iter().cloned());
            }
            cols.push(a.clone());
        }
        cols.push(self.outcome.clone());
        cols.extend(self.covariates.iter().cloned());
        cols.extend(self.g_prob.iter().cloned());
        cols
    }

    pub fn resolve(&self, name: &str) -> Option<VarRef> {
        if let Some(j) = self.treatments.iter().position(|a| a == name) {
            return Some(VarRef::Treatment(j));
        }
        for (j, group) in self.intermediates.iter().enumerate() {
            if let Some(k) = group.iter().position(|l| l == name) {
                return Some(VarRef::Intermediate(j, k));
            }
        }
        if self.outcome == name {
            return Some(VarRef::Outcome);
        }
        self.covariates
            .iter()
            .position(|w| w == name)
            .map(VarRef::Covariate)
    }
}

/// One time unit `O(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    /// Treatment nodes `A(t, 0..=K)`.
    pub a: Vec<u8>,
    /// Intermediate covariate nodes `L(t, 1..=K)`.
    pub l: Vec<Vec<f64>>,
    pub y: f64,
    pub w: Vec<f64>,
    /// Known assignment probabilities, one per treatment node.
    pub g_prob: Option<Vec<f64>>,
}

impl Block {
    pub fn simple(a: u8, y: f64, w: Vec<f64>) -> Self {
        Block {
            a: vec![a],
            l: Vec::new(),
            y,
            w,
            g_prob: None,
        }
    }

    pub fn value(&self, var: VarRef) -> f64 {
        match var {
            VarRef::Treatment(j) => f64::from(self.a[j]),
            VarRef::Intermediate(j, k) => self.l[j][k],
            VarRef::Outcome => self.y,
            VarRef::Covariate(k) => self.w[k],
        }
    }
}

/// Observed series `O(1), ..., O(N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    schema: Schema,
    blocks: Vec<Block>,
}

impl TimeSeries {
    pub fn new(schema: Schema, blocks: Vec<Block>) -> Result<Self> {
        schema.validate()?;
        if blocks.is_empty() {
            return Err(Error::Schema("a series needs at least one block".into()));
        }
        for (i, b) in blocks.iter().enumerate() {
            let line = i + 2;
            if b.a.len() != schema.treatments.len()
                || b.l.len() != schema.k()
                || b.w.len() != schema.covariates.len()
                || b.l.iter().zip(&schema.intermediates).any(|(l, s)| l.len() != s.len())
            {
                return Err(Error::Schema(format!("block {} does not match the schema", i + 1)));
            }
            if b.a.iter().any(|&a| a > 1) {
                return Err(Error::Domain { line, msg: "treatment must be 0 or 1".into() });
            }
            if !(0.0..=1.0).contains(&b.y) {
                return Err(Error::Domain { line, msg: format!("outcome {} outside [0, 1]", b.y) });
            }
            match (&b.g_prob, schema.has_known_g()) {
                (Some(g), true) if g.len() == schema.treatments.len() => {
                    if g.iter().any(|p| !(0.0..=1.0).contains(p)) {
                        return Err(Error::Domain { line, msg: "g_prob outside [0, 1]".into() });
                    }
                }
                (None, false) => {}
                _ => {
                    return Err(Error::Schema(format!(
                        "block {} g_prob presence does not match the schema",
                        i + 1
                    )))
                }
            }
        }
        Ok(TimeSeries { schema, blocks })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Block at 1-based time index `t`.
    pub fn block(&self, t: usize) -> &Block {
        &self.blocks[t - 1]
    }

    /// The first `n` blocks as a new series.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::InvalidArgument(format!(
                "prefix length {n} outside 1..={}",
                self.len()
            )));
        }
        Ok(TimeSeries {
            schema: self.schema.clone(),
            blocks: self.blocks[..n].to_vec(),
        })
    }

    pub fn from_csv_reader<R: Read>(reader: R, schema: Option<&Schema>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
            .iter()
            .map(str::to_string)
            .collect();
        let schema = match schema {
            Some(s) => s.clone(),
            None => Schema::infer(&header)?,
        };
        schema.validate()?;
        let col = |name: &str| -> Result<usize> {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("header is missing column `{name}`")))
        };
        let t_col = col("t")?;
        let a_cols = schema.treatments.iter().map(|a| col(a)).collect::<Result<Vec<_>>>()?;
        let l_cols = schema
            .intermediates
            .iter()
            .map(|g| g.iter().map(|l| col(l)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let y_col = col(&schema.outcome)?;
        let w_cols = schema.covariates.iter().map(|w| col(w)).collect::<Result<Vec<_>>>()?;
        let g_cols = schema.g_prob.iter().map(|g| col(g)).collect::<Result<Vec<_>>>()?;

        let mut blocks = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
            if record.len() != header.len() {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {} fields, found {}", header.len(), record.len()),
                });
            }
            let num = |c: usize| -> Result<f64> {
                let raw = &record[c];
                raw.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("column `{}`: cannot parse `{raw}` as a number", header[c]),
                })
            };
            let t_raw = &record[t_col];
            let expected = i + 1;
            match t_raw.parse::<usize>() {
                Ok(t) if t == expected => {}
                _ => {
                    return Err(Error::Sequencing {
                        line,
                        expected,
                        found: t_raw.to_string(),
                    })
                }
            }
            let mut a = Vec::with_capacity(a_cols.len());
            for &c in &a_cols {
                let v = num(c)?;
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Domain {
                        line,
                        msg: format!("treatment `{}` = {v} is not 0 or 1", header[c]),
                    });
                }
                a.push(v as u8);
            }
            let y = num(y_col)?;
            if !(0.0..=1.0).contains(&y) {
                return Err(Error::Domain { line, msg: format!("outcome {y} outside [0, 1]") });
            }
            let l = l_cols
                .iter()
                .map(|g| g.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            let w = w_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?;
            let g_prob = if g_cols.is_empty() {
                None
            } else {
                let g = g_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?;
                if g.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::Domain { line, msg: "g_prob outside [0, 1]".into() });
                }
                Some(g)
            };
            blocks.push(Block { a, l, y, w, g_prob });
        }
        TimeSeries::new(schema, blocks)
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend(self.schema.all_columns());
        wtr.write_record(&header)?;
        for (i, b) in self.blocks.iter().enumerate() {
            let mut rec = vec![(i + 1).to_string()];
            for j in 0..b.a.len() {
                if j > 0 {
                    rec.extend(b.l[j - 1].iter().map(|v| v.to_string()));
                }
                rec.push(b.a[j].to_string());
            }
            rec.push(b.y.to_string());
            rec.extend(b.w.iter().map(|v| v.to_string()));
            if let Some(g) = &b.g_prob {
                rec.extend(g.iter().map(|v| v.to_string()));
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_csv_writer(std::fs::File::create(path)?)
    }
}

/// Loads a series from a CSV file with header `t,<columns...>`.
///
/// With `schema = None` a single-treatment layout `t,a,y,<covariates>` is
/// inferred (plus an optional `g_prob` column).
pub fn load_timeseries(path: impl AsRef<Path>, schema: Option<&Schema>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    TimeSeries::from_csv_reader(std::io::BufReader::new(file), schema)
}

/// Transform applied to a lagged value or to a product of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureExpr {
    Lag { var: String, lag: usize },
    Product(Vec<FeatureExpr>),
    Sin(Box<FeatureExpr>),
    Cos(Box<FeatureExpr>),
    Square(Box<FeatureExpr>),
    Abs(Box<FeatureExpr>),
    /// `I(x > 0)`.
    Positive(Box<FeatureExpr>),
}

impl FeatureExpr {
    pub fn lag(var: &str, lag: usize) -> Self {
        FeatureExpr::Lag { var: var.to_string(), lag }
    }

    fn max_lag(&self) -> usize {
        match self {
            FeatureExpr::Lag { lag, .. } => *lag,
            FeatureExpr::Product(items) => items.iter().map(Self::max_lag).max().unwrap_or(0),
            FeatureExpr::Sin(e)
            | FeatureExpr::Cos(e)
            | FeatureExpr::Square(e)
            | FeatureExpr::Abs(e)
            | FeatureExpr::Positive(e) => e.max_lag(),
        }
    }

    fn check(&self, schema: &Schema) -> Result<()> {
        match self {
            FeatureExpr::Lag { var, lag } => {
                if *lag == 0 {
                    return Err(Error::Schema(format!("lag of `{var}` must be at least 1")));
                }
                schema
                    .resolve(var)
                    .map(|_| ())
                    .ok_or_else(|| Error::Schema(format!("unknown variable `{var}` in context")))
            }
            FeatureExpr::Product(items) => {
                if items.is_empty() {
                    return Err(Error::Schema("empty product in context feature".into()));
                }
                items.iter().try_for_each(|e| e.check(schema))
            }
            FeatureExpr::Sin(e)
            | FeatureExpr::Cos(e)
            | FeatureExpr::Square(e)
            | FeatureExpr::Abs(e)
            | FeatureExpr::Positive(e) => e.check(schema),
        }
    }

    /// Value at time `t` given blocks `1..t-1` (at least).
    fn eval(&self, schema: &Schema, blocks: &[Block], t: usize) -> f64 {
        match self {
            FeatureExpr::Lag { var, lag } => {
                // checked in ContextSpec::validate
                let v = schema.resolve(var).expect("validated variable");
                blocks[t - lag - 1].value(v)
            }
            FeatureExpr::Product(items) => items.iter().map(|e| e.eval(schema, blocks, t)).product(),
            FeatureExpr::Sin(e) => e.eval(schema, blocks, t).sin(),
            FeatureExpr::Cos(e) => e.eval(schema, blocks, t).cos(),
            FeatureExpr::Square(e) => e.eval(schema, blocks, t).powi(2),
            FeatureExpr::Abs(e) => e.eval(schema, blocks, t).abs(),
            FeatureExpr::Positive(e) => {
                if e.eval(schema, blocks, t) > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagSpec {
    pub var: String,
    pub lags: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivedFeature {
    pub name: String,
    pub expr: FeatureExpr,
}

/// Declarative definition of the context summary `C_o(t)`.
///
/// Features are the lagged values in declaration order followed by the
/// derived features. Lagged features are named `<var>_lag<k>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSpec {
    #[serde(default)]
    pub lags: Vec<LagSpec>,
    #[serde(default)]
    pub derived: Vec<DerivedFeature>,
    pub burn_in: usize,
}

impl ContextSpec {
    pub fn new(burn_in: usize) -> Self {
        ContextSpec { lags: Vec::new(), derived: Vec::new(), burn_in }
    }

    pub fn lag(mut self, var: &str, lags: &[usize]) -> Self {
        self.lags.push(LagSpec { var: var.to_string(), lags: lags.to_vec() });
        self
    }

    pub fn derived(mut self, name: &str, expr: FeatureExpr) -> Self {
        self.derived.push(DerivedFeature { name: name.to_string(), expr });
        self
    }

    fn exprs(&self) -> impl Iterator<Item = (String, FeatureExpr)> + '_ {
        let lagged = self.lags.iter().flat_map(|spec| {
            spec.lags
                .iter()
                .map(move |&k| (format!("{}_lag{k}", spec.var), FeatureExpr::lag(&spec.var, k)))
        });
        lagged.chain(self.derived.iter().map(|d| (d.name.clone(), d.expr.clone())))
    }

    pub fn names(&self) -> Vec<String> {
        self.exprs().map(|(n, _)| n).collect()
    }

    pub fn dim(&self) -> usize {
        self.lags.iter().map(|l| l.lags.len()).sum::<usize>() + self.derived.len()
    }

    pub fn max_lag(&self) -> usize {
        self.exprs().map(|(_, e)| e.max_lag()).max().unwrap_or(0)
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        let mut seen = HashSet::new();
        for (name, expr) in self.exprs() {
            expr.check(schema)?;
            if !seen.insert(name.clone()) {
                return Err(Error::Schema(format!("duplicate context feature `{name}`")));
            }
        }
        if self.burn_in < self.max_lag() {
            return Err(Error::Schema(format!(
                "burn-in {} is smaller than the largest lag {}",
                self.burn_in,
                self.max_lag()
            )));
        }
        Ok(())
    }
}

/// Realized context `C_o(t)` with feature names.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextVector {
    pub names: Arc<[String]>,
    pub values: Vec<f64>,
}

impl ContextVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

fn context_values(series: &TimeSeries, spec: &ContextSpec, t: usize) -> Result<Vec<f64>> {
    if t <= spec.burn_in || t > series.len() {
        return Err(Error::OutOfRange { t, burn_in: spec.burn_in, len: series.len() });
    }
    Ok(spec.exprs().map(|(_, e)| e.eval(&series.schema, &series.blocks, t)).collect())
}

/// Context at time `t` from the blocks observed so far, which must cover
/// `1..t-1`. Used while a series is still being generated; `spec` must
/// already be validated against `schema`.
pub fn context_at(schema: &Schema, spec: &ContextSpec, blocks: &[Block], t: usize) -> Result<Vec<f64>> {
    if t <= spec.burn_in || t > blocks.len() + 1 {
        return Err(Error::OutOfRange { t, burn_in: spec.burn_in, len: blocks.len() });
    }
    Ok(spec.exprs().map(|(_, e)| e.eval(schema, blocks, t)).collect())
}

/// Context summary at 1-based time `t`, which must lie past the burn-in.
pub fn extract_context(series: &TimeSeries, spec: &ContextSpec, t: usize) -> Result<ContextVector> {
    spec.validate(series.schema())?;
    Ok(ContextVector {
        names: spec.names().into(),
        values: context_values(series, spec, t)?,
    })
}

/// Rows `(C_o(t), A(t), Y(t))` for `t = burn_in + 1..=N`, ordered by `t`.
///
/// `a` and `g_prob` refer to the first treatment node.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFrame {
    pub times: Vec<usize>,
    names: Arc<[String]>,
    contexts: Vec<f64>,
    pub a: Vec<u8>,
    pub y: Vec<f64>,
    pub g_prob: Option<Vec<f64>>,
}

impl RegressionFrame {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn context(&self, row: usize) -> &[f64] {
        let d = self.dim();
        &self.contexts[row * d..(row + 1) * d]
    }

    pub fn context_vector(&self, row: usize) -> ContextVector {
        ContextVector { names: self.names.clone(), values: self.context(row).to_vec() }
    }

    /// Design for treatment models: contexts only.
    pub fn treatment_design(&self) -> Design {
        Design::from_flat(self.names.to_vec(), self.contexts.clone(), self.len())
    }

    /// Design for outcome models: contexts followed by a column named `a`
    /// holding the row's treatment (or `treatment` when given).
    pub fn outcome_design(&self, treatment: Option<u8>) -> Design {
        let d = self.dim();
        let mut names = self.names.to_vec();
        names.push("a".to_string());
        let mut x = Vec::with_capacity(self.len() * (d + 1));
        for i in 0..self.len() {
            x.extend_from_slice(self.context(i));
            x.push(f64::from(treatment.unwrap_or(self.a[i])));
        }
        Design::from_flat(names, x, self.len())
    }

    /// Contexts as CSV: `t,<feature names...>,a,y`.
    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend(self.names.iter().cloned());
        header.push("a".into());
        header.push("y".into());
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.times[i].to_string()];
            rec.extend(self.context(i).iter().map(|v| v.to_string()));
            rec.push(self.a[i].to_string());
            rec.push(self.y[i].to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Builds the regression frame of all usable time points.
pub fn build_regression_frame(series: &TimeSeries, spec: &ContextSpec) -> Result<RegressionFrame> {
    spec.validate(series.schema())?;
    if series.len() <= spec.burn_in {
        return Err(Error::EmptyFrame { len: series.len(), burn_in: spec.burn_in });
    }
    let names: Arc<[String]> = spec.names().into();
    let rows = series.len() - spec.burn_in;
    let mut contexts = Vec::with_capacity(rows * names.len());
    let mut times = Vec::with_capacity(rows);
    let mut a = Vec::with_capacity(rows);
    let mut y = Vec::with_capacity(rows);
    let known = series.schema().has_known_g();
    let mut g_prob = known.then(|| Vec::with_capacity(rows));
    for t in spec.burn_in + 1..=series.len() {
        contexts.extend(context_values(series, spec, t)?);
        let b = series.block(t);
        times.push(t);
        a.push(b.a[0]);
        y.push(b.y);
        if let (Some(g), Some(p)) = (g_prob.as_mut(), b.g_prob.as_ref()) {
            g.push(p[0]);
        }
    }
    Ok(RegressionFrame { times, names, contexts, a, y, g_prob })
}

/// Human readable summary of a frame, used in CLI output.
pub fn describe_frame(frame: &RegressionFrame) -> String {
    let mut s = String::new();
    let treated = frame.a.iter().filter(|&&a| a == 1).count();
    let _ = write!(
        s,
        "{} rows (t = {}..{}), {} context features, {} treated",
        frame.len(),
        frame.times.first().copied().unwrap_or(0),
        frame.times.last().copied().unwrap_or(0),
        frame.dim(),
        treated
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(ys: &[f64]) -> TimeSeries {
        let blocks = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| Block::simple((i % 2) as u8, y, vec![(i / 2) as f64]))
            .collect();
        TimeSeries::new(Schema::simple(["w1"]), blocks).unwrap()
    }

    #[test]
    fn parses_three_rows() {
        let csv = "t,a,y,w1\n1,0,1,0.5\n2,1,0,1.5\n3,1,1,2\n";
        let s = TimeSeries::from_csv_reader(csv.as_bytes(), None).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.block(2).a, vec![1]);
        assert_eq!(s.block(3).w, vec![2.0]);
    }

    #[test]
    fn rejects_outcome_above_one() {
        let csv = "t,a,y\n1,0,1.5\n";
        let err = TimeSeries::from_csv_reader(csv.as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Domain { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_missing_outcome_column() {
        let csv = "t,a,w1\n1,0,1\n";
        let err = TimeSeries::from_csv_reader(csv.as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn rejects_gap_in_time_index() {
        let csv = "t,a,y\n1,0,1\n3,1,0\n";
        let err = TimeSeries::from_csv_reader(csv.as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Sequencing { line: 3, expected: 2, .. }), "{err}");
    }

    #[test]
    fn malformed_number_reports_line() {
        let csv = "t,a,y,w\n1,0,1,0\n2,1,0,abc\n";
        let err = TimeSeries::from_csv_reader(csv.as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn single_lag_lookup() {
        let s = toy(&[0.0, 1.0, 0.0]);
        let spec = ContextSpec::new(1).lag("y", &[1]);
        let c = extract_context(&s, &spec, 3).unwrap();
        assert_eq!(c.values, vec![1.0]);
        assert_eq!(&*c.names, &["y_lag1".to_string()]);
    }

    #[test]
    fn mixed_lags_in_declaration_order() {
        let blocks = vec![
            Block::simple(0, 0.0, vec![0.0]),
            Block::simple(1, 1.0, vec![1.0]),
            Block::simple(0, 0.0, vec![1.0]),
        ];
        let s = TimeSeries::new(Schema::simple(["w1"]), blocks).unwrap();
        let spec = ContextSpec::new(2).lag("a", &[1]).lag("w1", &[2]);
        assert_eq!(extract_context(&s, &spec, 3).unwrap().values, vec![1.0, 0.0]);
    }

    #[test]
    fn burn_in_time_is_out_of_range() {
        let s = toy(&[0.0, 1.0, 0.0]);
        let spec = ContextSpec::new(2).lag("y", &[1]);
        assert!(matches!(
            extract_context(&s, &spec, 1),
            Err(Error::OutOfRange { t: 1, burn_in: 2, .. })
        ));
    }

    #[test]
    fn frame_rows_and_indices() {
        let s = toy(&[0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let spec = ContextSpec::new(4).lag("y", &[1, 3]).lag("w1", &[1]);
        let frame = build_regression_frame(&s, &spec).unwrap();
        assert_eq!(frame.len(), 6);
        assert_eq!(frame.times, vec![5, 6, 7, 8, 9, 10]);
        for i in 0..frame.len() {
            assert_eq!(frame.context(i).len(), spec.dim());
        }
    }

    #[test]
    fn frame_needs_rows_past_burn_in() {
        let s = toy(&[0.0, 1.0]);
        let spec = ContextSpec::new(2).lag("y", &[1]);
        assert!(matches!(build_regression_frame(&s, &spec), Err(Error::EmptyFrame { .. })));
    }

    #[test]
    fn context_rejects_unknown_variable_and_short_burn_in() {
        let s = toy(&[0.0, 1.0, 0.0]);
        assert!(extract_context(&s, &ContextSpec::new(1).lag("zz", &[1]), 2).is_err());
        assert!(extract_context(&s, &ContextSpec::new(1).lag("y", &[2]), 3).is_err());
    }

    #[test]
    fn derived_features() {
        let blocks = vec![
            Block::simple(1, 0.0, vec![-0.5]),
            Block::simple(1, 1.0, vec![2.0]),
            Block::simple(0, 0.0, vec![1.0]),
        ];
        let s = TimeSeries::new(Schema::simple(["w2"]), blocks).unwrap();
        let spec = ContextSpec::new(2)
            .derived(
                "prod",
                FeatureExpr::Product(vec![FeatureExpr::lag("w2", 1), FeatureExpr::lag("a", 2)]),
            )
            .derived("pos", FeatureExpr::Positive(Box::new(FeatureExpr::lag("w2", 2))))
            .derived("sin", FeatureExpr::Sin(Box::new(FeatureExpr::lag("w2", 1))));
        let c = extract_context(&s, &spec, 3).unwrap();
        assert_eq!(c.values, vec![2.0, 0.0, 2.0f64.sin()]);
    }

    #[test]
    fn multi_node_schema_round_trip() {
        let schema = Schema {
            treatments: vec!["a0".into(), "a1".into()],
            intermediates: vec![vec!["l1".into()]],
            outcome: "y".into(),
            covariates: vec![],
            g_prob: vec![],
        }
        .with_known_g();
        let blocks = vec![
            Block { a: vec![1, 0], l: vec![vec![0.25]], y: 1.0, w: vec![], g_prob: Some(vec![0.5, 0.3]) },
            Block { a: vec![0, 1], l: vec![vec![1.0]], y: 0.0, w: vec![], g_prob: Some(vec![0.5, 0.7]) },
        ];
        let s = TimeSeries::new(schema.clone(), blocks).unwrap();
        let mut buf = Vec::new();
        s.to_csv_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,a0,l1,a1,y,g_prob_a0,g_prob_a1\n"));
        let back = TimeSeries::from_csv_reader(buf.as_slice(), Some(&schema)).unwrap();
        assert_eq!(back, s);
    }
}
