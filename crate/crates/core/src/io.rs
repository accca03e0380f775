//! JSON model files.
//!
//! | kind | shape |
//! |---|---|
//! | kernel | `{"dom": [labels], "cod": [labels], "copar": [labels]?, "hand": "left"\|"right"?, "rows": [[..], ..] or flat}` |
//! | distribution | `{"space": [labels], "mass": [..]}` |
//! | Gaussian channel | `{"A": [[..], ..], "b": [..], "noise": [[..], ..], "copar_dim": n?, "hand": ..?}` |
//! | Gaussian state | `{"mean": [..], "cov": [[..], ..]}` |
//! | lens bundle | `{"fwd": channel, "bwd": "exact" \| {name: {"prior": state, "channel": channel}, ..}}` |
//!
//! Kernel rows with a coparameter are laid out `m * |cod| + y` for left-handed
//! kernels and `y * |copar| + m` for right-handed ones. Forward channels default
//! to left-handed and backward-table channels to right-handed. An empty `A`
//! row list with `"dom_dim"` given is accepted for channels out of `R^0`.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::discrete::{CoparKernel, Dist, FiniteKernel, FiniteSpace, Hand};
use crate::error::{Error, Result};
use crate::gaussian::{GaussChannel, GaussState};
use crate::lens::{exact_lens, Backward, BayesLens, Channel, Obs, SpaceSig, State};
use crate::NORMALIZATION_TOL;

/// How a loaded lens computes its backward channels.
#[derive(Clone)]
pub enum BackwardSpec {
    Exact,
    /// Named priors with their backward channels.
    Table(Vec<(String, State, Channel)>),
}

/// Any object a model file can hold.
#[derive(Clone)]
pub enum Model {
    Kernel(CoparKernel),
    Dist(Dist),
    GaussChannel(GaussChannel),
    GaussState(GaussState),
    Lens { lens: BayesLens, backward: BackwardSpec },
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Kernel(_) => "kernel",
            Model::Dist(_) => "distribution",
            Model::GaussChannel(_) => "gaussian channel",
            Model::GaussState(_) => "gaussian state",
            Model::Lens { .. } => "lens",
        }
    }

    /// The lens a model denotes: bundles as given, bare channels as their exact lens.
    pub fn into_lens(self) -> Result<BayesLens> {
        match self {
            Model::Lens { lens, .. } => Ok(lens),
            Model::Kernel(k) => exact_lens(Channel::Discrete(k)),
            Model::GaussChannel(g) => exact_lens(Channel::Gaussian(g)),
            other => Err(Error::Parse(format!("expected a lens or channel, found a {}", other.kind()))),
        }
    }

    pub fn into_state(self) -> Result<State> {
        match self {
            Model::Dist(d) => Ok(State::Discrete(d)),
            Model::GaussState(s) => Ok(State::Gaussian(s)),
            other => Err(Error::Parse(format!("expected a distribution or state, found a {}", other.kind()))),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum HandJson {
    Left,
    Right,
}

impl From<HandJson> for Hand {
    fn from(h: HandJson) -> Hand {
        match h {
            HandJson::Left => Hand::Left,
            HandJson::Right => Hand::Right,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Rows {
    Nested(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelJson {
    dom: Vec<String>,
    cod: Vec<String>,
    #[serde(default)]
    copar: Option<Vec<String>>,
    #[serde(default)]
    hand: Option<HandJson>,
    rows: Rows,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DistJson {
    space: Vec<String>,
    mass: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussChannelJson {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    noise: Vec<Vec<f64>>,
    #[serde(default)]
    copar_dim: usize,
    #[serde(default)]
    dom_dim: Option<usize>,
    #[serde(default)]
    hand: Option<HandJson>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussStateJson {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableEntryJson {
    prior: Value,
    channel: Value,
}

/// Wraps a library error with the location it came from.
fn at(path: &str, e: Error) -> Error {
    let msg = match e {
        Error::Parse(m) => m,
        other => other.to_string(),
    };
    if path.is_empty() {
        Error::Parse(msg)
    } else {
        Error::Parse(format!("{path}: {msg}"))
    }
}

fn field_path(path: &str, field: &str) -> String {
    if path.is_empty() {
        field.to_string()
    } else {
        format!("{path}.{field}")
    }
}

fn from_value<T: DeserializeOwned>(v: &Value, path: &str) -> Result<T> {
    T::deserialize(v).map_err(|e| at(path, Error::Parse(e.to_string())))
}

fn space(labels: Vec<String>, path: &str) -> Result<FiniteSpace> {
    FiniteSpace::new(labels).map_err(|e| at(path, e))
}

fn matrix(rows: &[Vec<f64>], ncols: usize, path: &str) -> Result<DMatrix<f64>> {
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(at(path, Error::Parse(format!("row {i} has {} entries, expected {ncols}", r.len()))));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn kernel_from(v: &Value, path: &str, default_hand: Hand) -> Result<CoparKernel> {
    let k: KernelJson = from_value(v, path)?;
    let dom = space(k.dom, &field_path(path, "dom"))?;
    let out = space(k.cod, &field_path(path, "cod"))?;
    let copar = match k.copar {
        Some(labels) => space(labels, &field_path(path, "copar"))?,
        None => FiniteSpace::unit(),
    };
    let hand = k.hand.map_or(default_hand, Hand::from);
    let cols = copar.size() * out.size();
    let rows_path = field_path(path, "rows");
    let flat = match k.rows {
        Rows::Nested(rows) => {
            if rows.len() != dom.size() {
                return Err(at(&rows_path, Error::Parse(format!("{} rows for a domain of {} outcomes", rows.len(), dom.size()))));
            }
            if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
                return Err(at(&rows_path, Error::Parse(format!("row {i} has {} entries, expected {cols}", r.len()))));
            }
            rows.concat()
        }
        Rows::Flat(v) => v,
    };
    let joint = FiniteKernel::new(dom, FiniteSpace::range(cols), flat).map_err(|e| at(&rows_path, e))?;
    CoparKernel::new(joint, copar, out, hand).map_err(|e| at(path, e))
}

fn dist_from(v: &Value, path: &str) -> Result<Dist> {
    let d: DistJson = from_value(v, path)?;
    let s = space(d.space, &field_path(path, "space"))?;
    Dist::new(s, d.mass).map_err(|e| at(&field_path(path, "mass"), e))
}

fn gauss_channel_from(v: &Value, path: &str, default_hand: Hand) -> Result<GaussChannel> {
    let g: GaussChannelJson = from_value(v, path)?;
    let cod = g.b.len();
    let dom = match (g.dom_dim, g.a.first()) {
        (Some(d), _) => d,
        (None, Some(r)) => r.len(),
        (None, None) => 0,
    };
    if g.a.len() != cod {
        return Err(at(&field_path(path, "A"), Error::Parse(format!("{} rows but b has {cod} entries", g.a.len()))));
    }
    let a = matrix(&g.a, dom, &field_path(path, "A"))?;
    let noise = matrix(&g.noise, cod, &field_path(path, "noise"))?;
    if noise.nrows() != cod {
        return Err(at(&field_path(path, "noise"), Error::Parse(format!("{} rows, expected {cod}", noise.nrows()))));
    }
    let hand = g.hand.map_or(default_hand, Hand::from);
    GaussChannel::new(a, DVector::from_vec(g.b), noise, g.copar_dim, hand).map_err(|e| at(path, e))
}

fn gauss_state_from(v: &Value, path: &str) -> Result<GaussState> {
    let s: GaussStateJson = from_value(v, path)?;
    let n = s.mean.len();
    let cov = matrix(&s.cov, n, &field_path(path, "cov"))?;
    if cov.nrows() != n {
        return Err(at(&field_path(path, "cov"), Error::Parse(format!("{} rows, expected {n}", cov.nrows()))));
    }
    GaussState::new(DVector::from_vec(s.mean), cov).map_err(|e| at(path, e))
}

fn has(v: &Value, key: &str) -> bool {
    v.get(key).is_some()
}

fn channel_from(v: &Value, path: &str, default_hand: Hand) -> Result<Channel> {
    if has(v, "rows") {
        Ok(Channel::Discrete(kernel_from(v, path, default_hand)?))
    } else if has(v, "A") {
        Ok(Channel::Gaussian(gauss_channel_from(v, path, default_hand)?))
    } else {
        Err(at(path, Error::Parse("expected a kernel (\"rows\") or Gaussian channel (\"A\")".into())))
    }
}

fn state_from(v: &Value, path: &str) -> Result<State> {
    if has(v, "mass") {
        Ok(State::Discrete(dist_from(v, path)?))
    } else if has(v, "mean") {
        Ok(State::Gaussian(gauss_state_from(v, path)?))
    } else {
        Err(at(path, Error::Parse("expected a distribution (\"mass\") or Gaussian state (\"mean\")".into())))
    }
}

fn states_close(a: &State, b: &State) -> bool {
    match (a, b) {
        (State::Discrete(p), State::Discrete(q)) => {
            p.space().same_points(q.space())
                && p.mass().iter().zip(q.mass()).all(|(x, y)| (x - y).abs() <= NORMALIZATION_TOL)
        }
        (State::Gaussian(p), State::Gaussian(q)) => {
            p.dim() == q.dim()
                && (p.mean() - q.mean()).amax() <= NORMALIZATION_TOL
                && (p.cov() - q.cov()).amax() <= NORMALIZATION_TOL
        }
        _ => false,
    }
}

fn lens_from(v: &Value) -> Result<Model> {
    let obj = v.as_object().ok_or_else(|| Error::Parse("a lens bundle must be an object".into()))?;
    if let Some(k) = obj.keys().find(|k| *k != "fwd" && *k != "bwd") {
        return Err(Error::Parse(format!("unknown field `{k}` in lens bundle, expected `fwd` or `bwd`")));
    }
    let fwd = channel_from(&v["fwd"], "fwd", Hand::Left)?;
    match v.get("bwd") {
        None => Err(Error::Parse("lens bundle: missing field `bwd`".into())),
        Some(Value::String(s)) if s == "exact" => {
            Ok(Model::Lens { lens: exact_lens(fwd).map_err(|e| at("fwd", e))?, backward: BackwardSpec::Exact })
        }
        Some(Value::Object(table)) => {
            let mut entries = Vec::with_capacity(table.len());
            for (name, entry) in table {
                let path = format!("bwd.{name}");
                let e: TableEntryJson = from_value(entry, &path)?;
                let prior = state_from(&e.prior, &field_path(&path, "prior"))?;
                let channel = channel_from(&e.channel, &field_path(&path, "channel"), Hand::Right)?;
                entries.push((name.clone(), prior, channel));
            }
            let table = entries.clone();
            let names = entries.iter().map(|(n, _, _)| n.as_str()).collect::<Vec<_>>().join(", ");
            let family: Backward = Arc::new(move |prior: &State| {
                table.iter().find(|(_, p, _)| states_close(p, prior)).map(|(_, _, c)| c.clone()).ok_or_else(|| {
                    Error::Unsupported(format!("no backward channel is tabulated for this prior (tabulated: {names})"))
                })
            });
            let lens = BayesLens::new_partial(fwd, family).map_err(|e| at("fwd", e))?;
            for (name, prior, _) in &entries {
                lens.backward(prior).map_err(|e| at(&format!("bwd.{name}"), e))?;
            }
            Ok(Model::Lens { lens, backward: BackwardSpec::Table(entries) })
        }
        Some(_) => Err(Error::Parse("bwd: expected \"exact\" or a table of named priors".into())),
    }
}

/// Parses a model from JSON text, detecting its kind from its fields.
pub fn parse_model(text: &str) -> Result<Model> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if has(&v, "fwd") || has(&v, "bwd") {
        lens_from(&v)
    } else if has(&v, "rows") {
        Ok(Model::Kernel(kernel_from(&v, "", Hand::Left)?))
    } else if has(&v, "mass") {
        Ok(Model::Dist(dist_from(&v, "")?))
    } else if has(&v, "A") {
        Ok(Model::GaussChannel(gauss_channel_from(&v, "", Hand::Left)?))
    } else if has(&v, "mean") {
        Ok(Model::GaussState(gauss_state_from(&v, "")?))
    } else {
        Err(Error::Parse(
            "unrecognized model: expected fields of a kernel, distribution, Gaussian channel/state or lens bundle".into(),
        ))
    }
}

pub fn read_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_model(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses an observation: a label or index for discrete spaces, a comma
/// separated or JSON list of numbers for Gaussian ones.
pub fn parse_obs(literal: &str, space: &SpaceSig) -> Result<Obs> {
    let literal = literal.trim();
    match space {
        SpaceSig::Discrete(s) => {
            if let Some(i) = s.index_of(literal) {
                return Ok(Obs::Discrete(i));
            }
            match literal.parse::<usize>() {
                Ok(i) if i < s.size() => Ok(Obs::Discrete(i)),
                _ => Err(Error::Parse(format!("observation `{literal}` is neither a label nor an index of {s}"))),
            }
        }
        SpaceSig::Gaussian(n) => {
            let inner = literal.trim_start_matches('[').trim_end_matches(']');
            let values: std::result::Result<Vec<f64>, _> =
                inner.split(',').filter(|t| !t.trim().is_empty()).map(|t| t.trim().parse::<f64>()).collect();
            let values = values.map_err(|e| Error::Parse(format!("observation `{literal}`: {e}")))?;
            if values.len() != *n {
                return Err(Error::Parse(format!("observation has {} coordinates, expected {n}", values.len())));
            }
            Ok(Obs::Gaussian(DVector::from_vec(values)))
        }
    }
}

fn hand_json(h: Hand) -> &'static str {
    match h {
        Hand::Left => "left",
        Hand::Right => "right",
    }
}

fn matrix_json(m: &DMatrix<f64>) -> Value {
    Value::from((0..m.nrows()).map(|i| m.row(i).iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>())
}

pub fn kernel_to_json(k: &CoparKernel) -> Value {
    let mut v = json!({
        "dom": k.dom().labels(),
        "cod": k.out().labels(),
        "hand": hand_json(k.hand()),
        "rows": k.joint().to_rows(),
    });
    if !k.copar().is_unit() {
        v["copar"] = json!(k.copar().labels());
    }
    v
}

pub fn dist_to_json(d: &Dist) -> Value {
    json!({ "space": d.space().labels(), "mass": d.mass() })
}

pub fn gauss_channel_to_json(g: &GaussChannel) -> Value {
    json!({
        "A": matrix_json(g.a()),
        "b": g.b().as_slice(),
        "noise": matrix_json(g.noise()),
        "copar_dim": g.copar_dim(),
        "dom_dim": g.dom_dim(),
        "hand": hand_json(g.hand()),
    })
}

pub fn gauss_state_to_json(s: &GaussState) -> Value {
    json!({ "mean": s.mean().as_slice(), "cov": matrix_json(s.cov()) })
}

pub fn channel_to_json(c: &Channel) -> Value {
    match c {
        Channel::Discrete(k) => kernel_to_json(k),
        Channel::Gaussian(g) => gauss_channel_to_json(g),
    }
}

pub fn state_to_json(s: &State) -> Value {
    match s {
        State::Discrete(d) => dist_to_json(d),
        State::Gaussian(g) => gauss_state_to_json(g),
    }
}

/// A lens bundle for a forward channel and backward specification.
pub fn lens_to_json(fwd: &Channel, backward: &BackwardSpec) -> Value {
    let bwd = match backward {
        BackwardSpec::Exact => json!("exact"),
        BackwardSpec::Table(entries) => Value::Object(
            entries
                .iter()
                .map(|(name, prior, c)| (name.clone(), json!({ "prior": state_to_json(prior), "channel": channel_to_json(c) })))
                .collect(),
        ),
    };
    json!({ "fwd": channel_to_json(fwd), "bwd": bwd })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{kl_loss, mle_loss};

    const BERNOULLI: &str = r#"{"dom": ["x"], "cod": ["0", "1"], "rows": [[0.75, 0.25]]}"#;

    #[test]
    fn bernoulli_mle() {
        let lens = parse_model(BERNOULLI).unwrap().into_lens().unwrap();
        let prior = lens.dom().reference_state();
        let y = parse_obs("1", &lens.obs()).unwrap();
        let v = mle_loss(&lens).eval(&prior, &y).unwrap();
        assert!((v - 4f64.ln()).abs() < 1e-15);
        assert!((v - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn non_stochastic_rows_are_named() {
        let err = parse_model(r#"{"dom": ["a", "b"], "cod": ["u", "v"], "rows": [[0.5, 0.5], [0.5, 0.6]]}"#)
            .err()
            .unwrap();
        let msg = err.to_string();
        assert!(msg.contains("row 1") && msg.contains("rows"), "{msg}");
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let msg = parse_model("{\n \"dom\": [\"a\"],\n \"cod\": oops }").err().unwrap().to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn missing_fields_are_named() {
        let msg = parse_model(r#"{"dom": ["a"], "rows": [[1.0]]}"#).err().unwrap().to_string();
        assert!(msg.contains("cod"), "{msg}");
    }

    #[test]
    fn kernels_and_states_round_trip() {
        let text = r#"{"dom": ["a", "b"], "cod": ["u", "v"], "copar": ["m0", "m1"],
                       "rows": [[0.1, 0.2, 0.3, 0.4], [0.25, 0.25, 0.25, 0.25]]}"#;
        let Model::Kernel(k) = parse_model(text).unwrap() else { panic!() };
        assert_eq!(k.copar().size(), 2);
        let Model::Kernel(back) = parse_model(&kernel_to_json(&k).to_string()).unwrap() else { panic!() };
        assert_eq!(back, k);
        let g = GaussChannel::new(
            DMatrix::from_row_slice(2, 1, &[1.0, 2.0]),
            DVector::from_vec(vec![0.5, -1.0]),
            DMatrix::identity(2, 2),
            1,
            Hand::Left,
        )
        .unwrap();
        let Model::GaussChannel(g2) = parse_model(&gauss_channel_to_json(&g).to_string()).unwrap() else { panic!() };
        assert_eq!(g2, g);
        let s = GaussState::new(DVector::from_vec(vec![1.0]), DMatrix::from_element(1, 1, 2.0)).unwrap();
        let Model::GaussState(s2) = parse_model(&gauss_state_to_json(&s).to_string()).unwrap() else { panic!() };
        assert_eq!(s2, s);
    }

    #[test]
    fn exact_and_table_lenses() {
        let exact = format!(r#"{{"fwd": {BERNOULLI}, "bwd": "exact"}}"#);
        let Model::Lens { lens, .. } = parse_model(&exact).unwrap() else { panic!() };
        let prior = lens.dom().reference_state();
        assert_eq!(kl_loss(&lens).eval(&prior, &Obs::Discrete(0)).unwrap(), 0.0);

        let fwd = r#"{"dom": ["a", "b"], "cod": ["u", "v"], "rows": [[0.9, 0.1], [0.2, 0.8]]}"#;
        let table = format!(
            r#"{{"fwd": {fwd}, "bwd": {{"flat": {{
                "prior": {{"space": ["a", "b"], "mass": [0.5, 0.5]}},
                "channel": {{"dom": ["u", "v"], "cod": ["a", "b"], "rows": [[0.5, 0.5], [0.5, 0.5]]}}}}}}}}"#
        );
        let Model::Lens { lens, backward } = parse_model(&table).unwrap() else { panic!() };
        assert!(matches!(backward, BackwardSpec::Table(ref t) if t.len() == 1));
        let flat = lens.dom().reference_state();
        assert!(kl_loss(&lens).eval(&flat, &Obs::Discrete(0)).unwrap() > 0.0);
        let other = State::Discrete(Dist::new(FiniteSpace::new(["a", "b"]).unwrap(), vec![0.3, 0.7]).unwrap());
        assert!(matches!(lens.backward(&other), Err(Error::Unsupported(_))));
        let again = lens_to_json(lens.fwd(), &backward);
        assert!(parse_model(&again.to_string()).is_ok());
    }

    #[test]
    fn table_channels_must_reverse_the_forward() {
        let fwd = r#"{"dom": ["a", "b"], "cod": ["u", "v", "w"], "rows": [[0.5, 0.25, 0.25], [0.2, 0.3, 0.5]]}"#;
        let table = format!(
            r#"{{"fwd": {fwd}, "bwd": {{"p": {{
                "prior": {{"space": ["a", "b"], "mass": [0.5, 0.5]}},
                "channel": {{"dom": ["a", "b"], "cod": ["a", "b"], "rows": [[0.5, 0.5], [0.5, 0.5]]}}}}}}}}"#
        );
        let msg = parse_model(&table).err().unwrap().to_string();
        assert!(msg.contains("bwd.p"), "{msg}");
    }

    #[test]
    fn observations() {
        let s = SpaceSig::Discrete(FiniteSpace::new(["no", "yes"]).unwrap());
        assert_eq!(parse_obs("yes", &s).unwrap(), Obs::Discrete(1));
        assert_eq!(parse_obs("0", &s).unwrap(), Obs::Discrete(0));
        assert!(parse_obs("2", &s).is_err());
        let g = SpaceSig::Gaussian(2);
        assert_eq!(parse_obs("[1, -0.5]", &g).unwrap(), Obs::Gaussian(DVector::from_vec(vec![1.0, -0.5])));
        assert!(parse_obs("1", &g).is_err());
    }
}
