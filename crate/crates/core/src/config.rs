//! System configuration read from JSON. Errors point at the offending field
//! with a JSON-pointer style path.

use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::extension::ExtensionSpec;
use crate::group::{GroupElement, GroupSpec, TableGroup};
use crate::potential::PotentialSpec;
use crate::shift::{MetricParam, ShiftSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Numerics {
    /// Truncation length N of the partition-function table.
    pub n_max: usize,
    /// Cylinder depth of the measure mesh.
    pub depth: usize,
    pub ball_radius: usize,
    /// Explicit s-schedule for the m_s diagnostic; defaults to ρ̂(1 + 2^{-k}).
    pub schedule: Option<Vec<f64>>,
    pub seed: u64,
    pub exact: bool,
    pub tol: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics { n_max: 40, depth: 3, ball_radius: 2, schedule: None, seed: 0, exact: false, tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub name: Option<String>,
    pub ext: ExtensionSpec,
    pub numerics: Numerics,
    /// Hex SHA-256 of the canonical (sorted-key) serialization of the input.
    pub hash: String,
}

pub fn load_config(path: &Path) -> Result<SystemConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config("", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<SystemConfig> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::config("", format!("invalid JSON: {e}")))?;
    let hash = canonical_hash(&root);
    let obj = as_object(&root, "")?;
    let name = match obj.get("name") {
        None => None,
        Some(v) => Some(as_str(v, "/name")?.to_string()),
    };
    let numerics = parse_numerics(obj.get("numerics"))?;
    let shift = parse_shift(obj)?;
    let metric = match obj.get("metric_r") {
        None => MetricParam::default(),
        Some(v) => MetricParam::new(as_f64(v, "/metric_r")?).map_err(|e| relabel(e, "/metric_r"))?,
    };
    let exact = numerics.exact || obj.get("exact").map(|v| as_bool(v, "/exact")).transpose()?.unwrap_or(false);
    let potential = parse_potential(field(obj, "potential", "")?, &shift, metric, exact)?;
    let group = parse_group(field(obj, "group", "")?)?;
    let psi = parse_psi(field(obj, "psi", "")?, &shift, &group)?;
    let ext = ExtensionSpec::new(shift, potential, group, psi).map_err(|e| relabel(e, ""))?;
    Ok(SystemConfig { name, ext, numerics: Numerics { exact, ..numerics }, hash })
}

/// Hash of the sorted-key serialization, so key order and whitespace do not
/// change it.
pub fn canonical_hash(v: &Value) -> String {
    let bytes = serde_json::to_vec(v).expect("Value serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn relabel(e: Error, at: &str) -> Error {
    match e {
        Error::Config { .. } => e,
        other => Error::config(at, other.to_string()),
    }
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, at: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::config(format!("{at}/{key}"), "missing required field"))
}

fn as_object<'a>(v: &'a Value, at: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| Error::config(at, "expected an object"))
}

fn as_array<'a>(v: &'a Value, at: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::config(at, "expected an array"))
}

fn as_str<'a>(v: &'a Value, at: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| Error::config(at, "expected a string"))
}

fn as_bool(v: &Value, at: &str) -> Result<bool> {
    v.as_bool().ok_or_else(|| Error::config(at, "expected a boolean"))
}

fn as_f64(v: &Value, at: &str) -> Result<f64> {
    v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| Error::config(at, "expected a finite number"))
}

fn as_usize(v: &Value, at: &str) -> Result<usize> {
    v.as_u64().map(|x| x as usize).ok_or_else(|| Error::config(at, "expected a non-negative integer"))
}

fn as_i64(v: &Value, at: &str) -> Result<i64> {
    v.as_i64().ok_or_else(|| Error::config(at, "expected an integer"))
}

/// Exact rational from a JSON number literal ("0.8", "1e-3") or a string
/// "num/den".
pub fn parse_rational(v: &Value, at: &str) -> Result<BigRational> {
    let text = match v {
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        _ => return Err(Error::config(at, "expected a number or \"num/den\" string")),
    };
    rational_from_str(text.trim()).ok_or_else(|| Error::config(at, format!("`{text}` is not a rational literal")))
}

fn rational_from_str(s: &str) -> Option<BigRational> {
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        return (!d.is_zero()).then(|| BigRational::new(n, d));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if frac_part.starts_with(['-', '+']) || (int_part.is_empty() && frac_part.is_empty()) {
        return None;
    }
    let digits: BigInt = format!("{int_part}{frac_part}").parse().ok()?;
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let pow = num_traits::pow(ten, scale.unsigned_abs() as usize);
    Some(if scale >= 0 { BigRational::from_integer(digits * pow) } else { BigRational::new(digits, pow) })
}

fn parse_numerics(v: Option<&Value>) -> Result<Numerics> {
    let mut n = Numerics::default();
    let Some(v) = v else { return Ok(n) };
    let obj = as_object(v, "/numerics")?;
    for (key, val) in obj {
        let at = format!("/numerics/{key}");
        match key.as_str() {
            "N" => n.n_max = as_usize(val, &at)?,
            "depth" => n.depth = as_usize(val, &at)?,
            "ball_radius" => n.ball_radius = as_usize(val, &at)?,
            "seed" => n.seed = val.as_u64().ok_or_else(|| Error::config(&at, "expected a u64"))?,
            "exact" => n.exact = as_bool(val, &at)?,
            "tol" => n.tol = as_f64(val, &at)?,
            "schedule" => {
                let items = as_array(val, &at)?;
                let s = items.iter().enumerate().map(|(i, x)| as_f64(x, &format!("{at}/{i}"))).collect::<Result<Vec<_>>>()?;
                if s.windows(2).any(|p| p[1] >= p[0]) {
                    return Err(Error::config(at, "schedule must be strictly decreasing"));
                }
                n.schedule = Some(s);
            }
            _ => return Err(Error::config(at, "unknown numerics field")),
        }
    }
    if n.n_max < 2 {
        return Err(Error::config("/numerics/N", "N must be at least 2"));
    }
    if !(n.tol > 0.0) {
        return Err(Error::config("/numerics/tol", "tol must be positive"));
    }
    Ok(n)
}

fn parse_shift(obj: &Map<String, Value>) -> Result<ShiftSpec> {
    let symbols = as_array(field(obj, "symbols", "")?, "/symbols")?
        .iter()
        .enumerate()
        .map(|(i, s)| as_str(s, &format!("/symbols/{i}")).map(str::to_string))
        .collect::<Result<Vec<_>>>()?;
    let k = symbols.len();
    let adjacency = match obj.get("adjacency") {
        None => vec![vec![1u8; k]; k],
        Some(v) => {
            let rows = as_array(v, "/adjacency")?;
            if rows.len() != k {
                return Err(Error::config("/adjacency", format!("expected {k} rows")));
            }
            rows.iter()
                .enumerate()
                .map(|(i, r)| {
                    let at = format!("/adjacency/{i}");
                    let r = as_array(r, &at)?;
                    if r.len() != k {
                        return Err(Error::config(&at, format!("expected {k} entries")));
                    }
                    r.iter()
                        .enumerate()
                        .map(|(j, x)| match x.as_u64() {
                            Some(b @ (0 | 1)) => Ok(b as u8),
                            _ => Err(Error::config(format!("{at}/{j}"), "expected 0 or 1")),
                        })
                        .collect()
                })
                .collect::<Result<Vec<Vec<u8>>>>()?
        }
    };
    let dagger = match obj.get("dagger") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let map = as_object(v, "/dagger")?;
            let index = |name: &str, at: &str| {
                symbols.iter().position(|s| s == name).ok_or_else(|| Error::config(at, format!("unknown symbol `{name}`")))
            };
            let mut d = vec![usize::MAX; k];
            for (from, to) in map {
                let at = format!("/dagger/{from}");
                let i = index(from, &at)?;
                d[i] = index(as_str(to, &at)?, &at)?;
            }
            if let Some(i) = d.iter().position(|&x| x == usize::MAX) {
                return Err(Error::config("/dagger", format!("no image for symbol `{}`", symbols[i])));
            }
            Some(d)
        }
    };
    ShiftSpec::new(symbols, adjacency, dagger).map_err(|e| relabel(e, "/adjacency"))
}

fn parse_potential(v: &Value, shift: &ShiftSpec, metric: MetricParam, exact: bool) -> Result<PotentialSpec> {
    let obj = as_object(v, "/potential")?;
    let depth = as_usize(field(obj, "depth", "/potential")?, "/potential/depth")?;
    let values = as_object(field(obj, "values", "/potential")?, "/potential/values")?;
    let mut floats = Vec::with_capacity(values.len());
    let mut rationals = Vec::with_capacity(values.len());
    for (key, val) in values {
        let at = format!("/potential/values/{key}");
        let w = shift.parse_word(key).map_err(|e| relabel(e, &at))?;
        if exact {
            let q = parse_rational(val, &at)?;
            if q <= BigRational::zero() {
                return Err(Error::config(at, "potential values must be positive"));
            }
            if q > BigRational::one() {
                return Err(Error::config(at, "exact mode expects probabilities in (0, 1]"));
            }
            rationals.push((w, q));
        } else {
            floats.push((w, as_f64(val, &at)?));
        }
    }
    let built = if exact {
        PotentialSpec::new_exact(shift, depth, rationals, metric)
    } else {
        PotentialSpec::new(shift, depth, floats, metric)
    };
    built.map_err(|e| relabel(e, "/potential/values"))
}

fn parse_group(v: &Value) -> Result<GroupSpec> {
    let obj = as_object(v, "/group")?;
    let kind = as_str(field(obj, "kind", "/group")?, "/group/kind")?;
    let d = || as_usize(field(obj, "d", "/group")?, "/group/d");
    let spec = match kind {
        "lattice" => GroupSpec::lattice(d()?),
        "free" => {
            let cap = obj.get("ball_cap").map(|c| as_usize(c, "/group/ball_cap")).transpose()?;
            GroupSpec::free(d()?).map(|g| match cap {
                Some(c) => g.with_ball_cap(c),
                None => g,
            })
        }
        "table" => {
            let rows = as_array(field(obj, "table", "/group")?, "/group/table")?;
            let mul = rows
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    as_array(r, &format!("/group/table/{i}"))?
                        .iter()
                        .enumerate()
                        .map(|(j, x)| as_usize(x, &format!("/group/table/{i}/{j}")))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            TableGroup::new(mul, None).map(GroupSpec::Table)
        }
        other => return Err(Error::config("/group/kind", format!("unknown kind `{other}`"))),
    };
    spec.map_err(|e| relabel(e, "/group"))
}

fn parse_element(v: &Value, group: &GroupSpec, at: &str) -> Result<GroupElement> {
    let g = match group {
        GroupSpec::Lattice { .. } => GroupElement::Lattice(
            as_array(v, at)?.iter().enumerate().map(|(i, x)| as_i64(x, &format!("{at}/{i}"))).collect::<Result<_>>()?,
        ),
        GroupSpec::Free { .. } => GroupElement::Free(
            as_array(v, at)?
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let at = format!("{at}/{i}");
                    i32::try_from(as_i64(x, &at)?).map_err(|_| Error::config(at, "generator index out of range"))
                })
                .collect::<Result<_>>()?,
        ),
        GroupSpec::Table(_) => GroupElement::Table(as_usize(v, at)?),
    };
    group.validate(&g).map_err(|e| relabel(e, at))?;
    Ok(g)
}

fn parse_psi(v: &Value, shift: &ShiftSpec, group: &GroupSpec) -> Result<Vec<GroupElement>> {
    let obj = as_object(v, "/psi")?;
    let mut psi: Vec<Option<GroupElement>> = vec![None; shift.len()];
    for (key, val) in obj {
        let at = format!("/psi/{key}");
        let a = shift.symbols().iter().position(|s| s == key).ok_or_else(|| Error::config(&at, "unknown symbol"))?;
        psi[a] = Some(parse_element(val, group, &at)?);
    }
    psi.into_iter()
        .enumerate()
        .map(|(a, g)| g.ok_or_else(|| Error::config(format!("/psi/{}", shift.symbol_name(a)), "missing value for symbol")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const POLYA: &str = r#"{
        "symbols": ["+1", "-1"],
        "adjacency": [[1, 1], [1, 1]],
        "dagger": {"+1": "-1", "-1": "+1"},
        "potential": {"depth": 1, "values": {"+1": 0.8, "-1": 0.2}},
        "group": {"kind": "lattice", "d": 1},
        "psi": {"+1": [1], "-1": [-1]},
        "numerics": {"N": 30, "seed": 7}
    }"#;

    fn err_field(text: &str) -> String {
        match parse_config(text) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn parses_polya() {
        let c = parse_config(POLYA).unwrap();
        assert_eq!(c.ext.shift.len(), 2);
        assert_eq!(c.numerics.n_max, 30);
        assert_eq!(c.numerics.seed, 7);
        assert_eq!(c.numerics.depth, 3);
        assert_eq!(c.ext.psi(1), &GroupElement::Lattice(vec![-1]));
        assert!((c.ext.potential.phi(&[0]) - 0.8).abs() < 1e-15);
        assert_eq!(c.hash.len(), 64);
    }

    #[test]
    fn hash_ignores_layout() {
        let a = parse_config(POLYA).unwrap().hash;
        let v: Value = serde_json::from_str(POLYA).unwrap();
        let b = parse_config(&serde_json::to_string_pretty(&v).unwrap()).unwrap().hash;
        assert_eq!(a, b);
        let c = parse_config(&POLYA.replace("\"seed\": 7", "\"seed\": 8")).unwrap().hash;
        assert_ne!(a, c);
    }

    #[test]
    fn exact_mode_keeps_decimals() {
        let text = POLYA.replace("\"N\": 30", "\"N\": 30, \"exact\": true");
        let c = parse_config(&text).unwrap();
        assert!(c.numerics.exact);
        let q = c.ext.potential.phi_exact(&[0]).unwrap();
        assert_eq!(q, &BigRational::new(4.into(), 5.into()));
    }

    #[test]
    fn rational_literals() {
        let r = |s: &str| rational_from_str(s).unwrap();
        assert_eq!(r("0.25"), BigRational::new(1.into(), 4.into()));
        assert_eq!(r("3/6"), BigRational::new(1.into(), 2.into()));
        assert_eq!(r("2e-1"), BigRational::new(1.into(), 5.into()));
        assert_eq!(r("1.5E2"), BigRational::from_integer(150.into()));
        assert!(rational_from_str("1/0").is_none());
        assert!(rational_from_str("abc").is_none());
    }

    #[test]
    fn errors_point_at_fields() {
        let v: Value = serde_json::from_str(POLYA).unwrap();
        let without = |k: &str| {
            let mut v = v.clone();
            v.as_object_mut().unwrap().remove(k);
            v.to_string()
        };
        assert_eq!(err_field(&without("psi")), "/psi");
        assert_eq!(err_field(&without("group")), "/group");
        assert_eq!(err_field(&POLYA.replace("\"-1\": [-1]", "\"-1\": [-1, 0]")), "/psi/-1");
        assert_eq!(err_field(&POLYA.replace("\"-1\": 0.2", "\"-1\": -0.2")), "/potential/values");
        assert_eq!(err_field(&POLYA.replace("\"-1\": [-1]", "\"x\": [-1]")), "/psi/x");
        assert_eq!(err_field(&POLYA.replace("lattice", "torus")), "/group/kind");
        assert_eq!(err_field(&POLYA.replace("\"N\": 30", "\"N\": -1")), "/numerics/N");
        assert_eq!(err_field("[1]"), "");
        assert_eq!(err_field("{"), "");
    }

    #[test]
    fn free_and_table_groups() {
        let free = r#"{
            "symbols": ["a", "b", "A", "B"],
            "dagger": {"a": "A", "A": "a", "b": "B", "B": "b"},
            "potential": {"depth": 1, "values": {"a": 0.25, "b": 0.25, "A": 0.25, "B": 0.25}},
            "group": {"kind": "free", "d": 2},
            "psi": {"a": [1], "b": [2], "A": [-1], "B": [-2]}
        }"#;
        let c = parse_config(free).unwrap();
        assert_eq!(c.ext.psi(3), &GroupElement::Free(vec![-2]));
        let table = r#"{
            "symbols": ["x", "y"],
            "potential": {"depth": 1, "values": {"x": 0.5, "y": 0.5}},
            "group": {"kind": "table", "table": [[0, 1], [1, 0]]},
            "psi": {"x": 1, "y": 0}
        }"#;
        let c = parse_config(table).unwrap();
        assert_eq!(c.ext.psi(0), &GroupElement::Table(1));
        assert_eq!(err_field(&table.replace("\"x\": 1,", "\"x\": 5,")), "/psi/x");
    }
}
