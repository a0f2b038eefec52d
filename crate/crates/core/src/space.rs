//! Declarative co-design search spaces.
//!
//! A [`SearchSpace`] is an ordered list of finite [`Dimension`]s. Dimension order
//! is fixed at parse time and determines the layout of both feature encodings.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, thiserror::Error)]
pub enum SpaceError {
    #[error("malformed space document: {0}")]
    Syntax(String),
    #[error("duplicate dimension name `{0}`")]
    DuplicateName(String),
    #[error("dimension `{0}` needs at least two distinct values")]
    TooFewValues(String),
    #[error("dimension `{name}`: {reason}")]
    InvalidRange { name: String, reason: String },
    #[error("dimension `{name}` has unknown kind `{kind}`")]
    UnknownKind { name: String, kind: String },
    #[error("dimension `{name}`: missing field `{field}`")]
    MissingField { name: String, field: &'static str },
    #[error("value {value} is not in the value set of dimension `{name}`")]
    ValueNotInSet { name: String, value: String },
    #[error("config does not match space layout: {0}")]
    LayoutMismatch(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Exact decimal number `units / 10^scale`, kept normalized (no trailing zeros).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Decimal {
    units: i64,
    scale: u32,
}

impl Decimal {
    pub fn new(units: i64, scale: u32) -> Self {
        let mut d = Decimal { units, scale };
        while d.scale > 0 && d.units % 10 == 0 {
            d.units /= 10;
            d.scale -= 1;
        }
        d
    }

    pub fn units(&self) -> i64 {
        self.units
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    /// Units of `self` expressed at a (larger or equal) scale.
    fn units_at(&self, scale: u32) -> Option<i64> {
        debug_assert!(scale >= self.scale);
        10i64
            .checked_pow(scale - self.scale)
            .and_then(|m| self.units.checked_mul(m))
    }

    pub fn to_f64(&self) -> f64 {
        self.units as f64 / 10f64.powi(self.scale as i32)
    }

    /// Parses the shortest round-trip representation of `x`, so `0.77_f64`
    /// becomes exactly 77/100.
    pub fn from_f64(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        format!("{x}").parse().ok()
    }
}

impl std::str::FromStr for Decimal {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        if body.contains(['e', 'E']) {
            return Err(format!("exponent notation not supported: {s}"));
        }
        let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(format!("not a decimal: {s}"));
        }
        if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
            return Err(format!("not a decimal: {s}"));
        }
        let digits = format!("{int_part}{frac_part}");
        let units: i64 = if digits.is_empty() {
            0
        } else {
            digits.parse().map_err(|_| format!("decimal out of range: {s}"))?
        };
        Ok(Decimal::new(
            if neg { -units } else { units },
            frac_part.len() as u32,
        ))
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.scale == 0 {
            return write!(f, "{}", self.units);
        }
        let sign = if self.units < 0 { "-" } else { "" };
        let abs = self.units.unsigned_abs();
        let p = 10u64.pow(self.scale);
        write!(
            f,
            "{sign}{}.{:0width$}",
            abs / p,
            abs % p,
            width = self.scale as usize
        )
    }
}

/// One concrete value of a dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Int(i64),
    Decimal(Decimal),
    Bool(bool),
    Label(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Decimal(d) => Some(d.to_f64()),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Label(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Decimal(d) => write!(f, "{d}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Label(s) => write!(f, "{s:?}"),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Int(i) => s.serialize_i64(*i),
            Value::Decimal(d) => s.serialize_f64(d.to_f64()),
            Value::Bool(b) => s.serialize_bool(*b),
            Value::Label(l) => s.serialize_str(l),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Value;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an integer, decimal, boolean or string")
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<Value, E> {
                Ok(Value::Int(v))
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<Value, E> {
                i64::try_from(v)
                    .map(Value::Int)
                    .map_err(|_| E::custom("integer out of range"))
            }
            fn visit_f64<E: serde::de::Error>(self, v: f64) -> Result<Value, E> {
                Decimal::from_f64(v)
                    .map(Value::Decimal)
                    .ok_or_else(|| E::custom(format!("unrepresentable decimal {v}")))
            }
            fn visit_bool<E: serde::de::Error>(self, v: bool) -> Result<Value, E> {
                Ok(Value::Bool(v))
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<Value, E> {
                Ok(Value::Label(v.to_owned()))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Architecture,
    Parallelism,
    Infra,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DimensionKind {
    /// Labels in declaration order.
    Categorical(Vec<String>),
    SteppedInt { min: i64, max: i64, step: i64 },
    /// Stored at a common scale so that every value is `min + k * step` exactly.
    SteppedDecimal {
        min_units: i64,
        step_units: i64,
        count: usize,
        scale: u32,
    },
    Boolean,
    /// Explicit ascending integer values, e.g. powers of two.
    IntSet(Vec<i64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dimension {
    pub name: String,
    pub kind: DimensionKind,
    pub role: Option<Role>,
}

impl Dimension {
    pub fn categorical<S: Into<String>>(name: &str, labels: impl IntoIterator<Item = S>) -> Self {
        Dimension {
            name: name.to_owned(),
            kind: DimensionKind::Categorical(labels.into_iter().map(Into::into).collect()),
            role: None,
        }
    }

    pub fn stepped_int(name: &str, min: i64, max: i64, step: i64) -> Self {
        Dimension {
            name: name.to_owned(),
            kind: DimensionKind::SteppedInt { min, max, step },
            role: None,
        }
    }

    pub fn stepped_decimal(
        name: &str,
        min: Decimal,
        max: Decimal,
        step: Decimal,
    ) -> Result<Self, SpaceError> {
        let bad = |reason: &str| SpaceError::InvalidRange {
            name: name.to_owned(),
            reason: reason.to_owned(),
        };
        let scale = min.scale().max(max.scale()).max(step.scale());
        let (lo, hi, st) = match (min.units_at(scale), max.units_at(scale), step.units_at(scale)) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(bad("decimal precision overflow")),
        };
        if st <= 0 {
            return Err(bad("step must be positive"));
        }
        if lo > hi {
            return Err(bad("min exceeds max"));
        }
        if (hi - lo) % st != 0 {
            return Err(bad("max - min is not divisible by step"));
        }
        Ok(Dimension {
            name: name.to_owned(),
            kind: DimensionKind::SteppedDecimal {
                min_units: lo,
                step_units: st,
                count: ((hi - lo) / st) as usize + 1,
                scale,
            },
            role: None,
        })
    }

    pub fn boolean(name: &str) -> Self {
        Dimension {
            name: name.to_owned(),
            kind: DimensionKind::Boolean,
            role: None,
        }
    }

    pub fn int_set(name: &str, values: impl IntoIterator<Item = i64>) -> Self {
        Dimension {
            name: name.to_owned(),
            kind: DimensionKind::IntSet(values.into_iter().collect()),
            role: None,
        }
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = Some(role);
        self
    }

    fn validate(&self) -> Result<(), SpaceError> {
        let bad = |reason: &str| SpaceError::InvalidRange {
            name: self.name.clone(),
            reason: reason.to_owned(),
        };
        match &self.kind {
            DimensionKind::Categorical(labels) => {
                let distinct: HashSet<_> = labels.iter().collect();
                if distinct.len() != labels.len() {
                    return Err(bad("duplicate categorical label"));
                }
                if labels.len() < 2 {
                    return Err(SpaceError::TooFewValues(self.name.clone()));
                }
            }
            DimensionKind::SteppedInt { min, max, step } => {
                if *step <= 0 {
                    return Err(bad("step must be positive"));
                }
                if min > max {
                    return Err(bad("min exceeds max"));
                }
                if (max - min) % step != 0 {
                    return Err(bad("max - min is not divisible by step"));
                }
            }
            DimensionKind::SteppedDecimal { step_units, count, .. } => {
                if *step_units <= 0 || *count == 0 {
                    return Err(bad("step must be positive"));
                }
            }
            DimensionKind::Boolean => {}
            DimensionKind::IntSet(values) => {
                if values.len() < 2 {
                    return Err(SpaceError::TooFewValues(self.name.clone()));
                }
                if values.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(bad("integer set must be strictly ascending"));
                }
            }
        }
        Ok(())
    }

    pub fn value_count(&self) -> usize {
        match &self.kind {
            DimensionKind::Categorical(labels) => labels.len(),
            DimensionKind::SteppedInt { min, max, step } => ((max - min) / step) as usize + 1,
            DimensionKind::SteppedDecimal { count, .. } => *count,
            DimensionKind::Boolean => 2,
            DimensionKind::IntSet(values) => values.len(),
        }
    }

    /// Value at canonical position `idx`. Panics when out of range.
    pub fn value_at(&self, idx: usize) -> Value {
        assert!(idx < self.value_count(), "index {idx} out of range for `{}`", self.name);
        match &self.kind {
            DimensionKind::Categorical(labels) => Value::Label(labels[idx].clone()),
            DimensionKind::SteppedInt { min, step, .. } => Value::Int(min + step * idx as i64),
            DimensionKind::SteppedDecimal {
                min_units,
                step_units,
                scale,
                ..
            } => Value::Decimal(Decimal::new(min_units + step_units * idx as i64, *scale)),
            DimensionKind::Boolean => Value::Bool(idx == 1),
            DimensionKind::IntSet(values) => Value::Int(values[idx]),
        }
    }

    pub fn index_of(&self, value: &Value) -> Option<usize> {
        match (&self.kind, value) {
            (DimensionKind::Categorical(labels), Value::Label(l)) => {
                labels.iter().position(|x| x == l)
            }
            (DimensionKind::SteppedInt { min, max, step }, Value::Int(v)) => {
                (v >= min && v <= max && (v - min) % step == 0).then(|| ((v - min) / step) as usize)
            }
            (
                DimensionKind::SteppedDecimal {
                    min_units,
                    step_units,
                    count,
                    scale,
                },
                v,
            ) => {
                let d = match v {
                    Value::Decimal(d) => *d,
                    Value::Int(i) => Decimal::new(*i, 0),
                    _ => return None,
                };
                if d.scale() > *scale {
                    return None;
                }
                let u = d.units_at(*scale)?;
                let off = u - min_units;
                (off >= 0 && off % step_units == 0 && ((off / step_units) as usize) < *count)
                    .then(|| (off / step_units) as usize)
            }
            (DimensionKind::Boolean, Value::Bool(b)) => Some(usize::from(*b)),
            (DimensionKind::IntSet(values), Value::Int(v)) => values.binary_search(v).ok(),
            _ => None,
        }
    }

    /// Integer and decimal kinds are numeric in the mixed encoding.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self.kind,
            DimensionKind::SteppedInt { .. }
                | DimensionKind::SteppedDecimal { .. }
                | DimensionKind::IntSet(_)
        )
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            DimensionKind::Categorical(_) => "categorical",
            DimensionKind::SteppedInt { .. } => "stepped-int",
            DimensionKind::SteppedDecimal { .. } => "stepped-decimal",
            DimensionKind::Boolean => "boolean",
            DimensionKind::IntSet(_) => "int-set",
        }
    }
}

/// One full assignment of every dimension, in dimension order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ConfigPoint {
    assignments: Vec<(String, Value)>,
}

impl ConfigPoint {
    pub fn new(assignments: Vec<(String, Value)>) -> Self {
        ConfigPoint { assignments }
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.assignments
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.assignments.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

impl fmt::Display for ConfigPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (n, v)) in self.assignments.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{n}: {v}")?;
        }
        f.write_str("}")
    }
}

impl Serialize for ConfigPoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.assignments.len()))?;
        for (n, v) in &self.assignments {
            map.serialize_entry(n, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ConfigPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = ConfigPoint;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of dimension name to value")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<ConfigPoint, A::Error> {
                let mut assignments = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, Value>()? {
                    assignments.push((k, v));
                }
                Ok(ConfigPoint { assignments })
            }
        }
        d.deserialize_map(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    OneHot,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SlotKind {
    Numeric,
    Categorical { levels: usize },
}

/// Describes how a feature vector was produced, so a model can reject
/// vectors from a different space or encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub encoding: Encoding,
    pub slots: Vec<SlotKind>,
}

impl FeatureLayout {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub name: String,
    pub version: u32,
    dimensions: Vec<Dimension>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    name: String,
    #[serde(default = "default_version")]
    version: u32,
    #[serde(default)]
    dimensions: Vec<RawDimension>,
}

fn default_version() -> u32 {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDimension {
    name: String,
    kind: String,
    values: Option<Vec<toml::Value>>,
    min: Option<toml::Value>,
    max: Option<toml::Value>,
    step: Option<toml::Value>,
    role: Option<Role>,
}

fn toml_decimal(name: &str, v: &toml::Value) -> Result<Decimal, SpaceError> {
    let bad = |reason: String| SpaceError::InvalidRange {
        name: name.to_owned(),
        reason,
    };
    match v {
        toml::Value::Integer(i) => Ok(Decimal::new(*i, 0)),
        toml::Value::Float(f) => Decimal::from_f64(*f).ok_or_else(|| bad(format!("bad decimal {f}"))),
        toml::Value::String(s) => s.parse().map_err(bad),
        other => Err(bad(format!("expected a number, got {other}"))),
    }
}

fn toml_int(name: &str, v: &toml::Value) -> Result<i64, SpaceError> {
    v.as_integer().ok_or_else(|| SpaceError::InvalidRange {
        name: name.to_owned(),
        reason: format!("expected an integer, got {v}"),
    })
}

impl RawDimension {
    fn build(self) -> Result<Dimension, SpaceError> {
        let name = self.name;
        let field = |f: Option<toml::Value>, field: &'static str| {
            f.ok_or_else(|| SpaceError::MissingField {
                name: name.clone(),
                field,
            })
        };
        let mut dim = match self.kind.as_str() {
            "categorical" => {
                let values = self.values.unwrap_or_default();
                let labels = values
                    .into_iter()
                    .map(|v| match v {
                        toml::Value::String(s) => s,
                        other => other.to_string(),
                    })
                    .collect::<Vec<_>>();
                Dimension::categorical(&name, labels)
            }
            "stepped-int" => {
                let min = toml_int(&name, &field(self.min, "min")?)?;
                let max = toml_int(&name, &field(self.max, "max")?)?;
                let step = toml_int(&name, &field(self.step, "step")?)?;
                Dimension::stepped_int(&name, min, max, step)
            }
            "stepped-decimal" => {
                let min = toml_decimal(&name, &field(self.min, "min")?)?;
                let max = toml_decimal(&name, &field(self.max, "max")?)?;
                let step = toml_decimal(&name, &field(self.step, "step")?)?;
                Dimension::stepped_decimal(&name, min, max, step)?
            }
            "boolean" => Dimension::boolean(&name),
            "int-set" => {
                let values = self
                    .values
                    .ok_or_else(|| SpaceError::MissingField {
                        name: name.clone(),
                        field: "values",
                    })?
                    .iter()
                    .map(|v| toml_int(&name, v))
                    .collect::<Result<Vec<_>, _>>()?;
                Dimension::int_set(&name, values)
            }
            other => {
                return Err(SpaceError::UnknownKind {
                    name,
                    kind: other.to_owned(),
                })
            }
        };
        dim.role = self.role;
        Ok(dim)
    }
}

impl SearchSpace {
    pub fn new(name: &str, version: u32, dimensions: Vec<Dimension>) -> Result<Self, SpaceError> {
        let mut seen = HashSet::new();
        for d in &dimensions {
            if !seen.insert(d.name.as_str()) {
                return Err(SpaceError::DuplicateName(d.name.clone()));
            }
            d.validate()?;
        }
        Ok(SearchSpace {
            name: name.to_owned(),
            version,
            dimensions,
        })
    }

    /// Parses a space document (TOML key/value tree).
    pub fn parse(text: &str) -> Result<Self, SpaceError> {
        let raw: RawSpace = toml::from_str(text).map_err(|e| SpaceError::Syntax(e.to_string()))?;
        let dims = raw
            .dimensions
            .into_iter()
            .map(RawDimension::build)
            .collect::<Result<Vec<_>, _>>()?;
        SearchSpace::new(&raw.name, raw.version, dims)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, SpaceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SpaceError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn dimension(&self, name: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    /// Exact number of configurations; 1 for an empty space.
    pub fn cardinality(&self) -> BigUint {
        self.dimensions
            .iter()
            .fold(BigUint::from(1u32), |acc, d| acc * BigUint::from(d.value_count()))
    }

    /// Cardinality when it fits in a `u64`.
    pub fn cardinality_u64(&self) -> Option<u64> {
        self.dimensions
            .iter()
            .try_fold(1u64, |acc, d| acc.checked_mul(d.value_count() as u64))
    }

    pub fn value_counts(&self) -> Vec<usize> {
        self.dimensions.iter().map(Dimension::value_count).collect()
    }

    pub fn sample_uniform(&self, seed: u64) -> ConfigPoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> ConfigPoint {
        let idx: Vec<usize> = self
            .dimensions
            .iter()
            .map(|d| rng.gen_range(0..d.value_count()))
            .collect();
        self.config_from_indices(&idx)
    }

    pub fn config_from_indices(&self, indices: &[usize]) -> ConfigPoint {
        assert_eq!(indices.len(), self.dimensions.len());
        ConfigPoint {
            assignments: self
                .dimensions
                .iter()
                .zip(indices)
                .map(|(d, &i)| (d.name.clone(), d.value_at(i)))
                .collect(),
        }
    }

    /// Canonical value positions of `config`, validating it against the space.
    pub fn indices_of(&self, config: &ConfigPoint) -> Result<Vec<usize>, SpaceError> {
        if config.len() != self.dimensions.len() {
            return Err(SpaceError::LayoutMismatch(format!(
                "expected {} assignments, got {}",
                self.dimensions.len(),
                config.len()
            )));
        }
        self.dimensions
            .iter()
            .zip(&config.assignments)
            .map(|(d, (n, v))| {
                if *n != d.name {
                    return Err(SpaceError::LayoutMismatch(format!(
                        "expected dimension `{}`, found `{n}`",
                        d.name
                    )));
                }
                d.index_of(v).ok_or_else(|| SpaceError::ValueNotInSet {
                    name: d.name.clone(),
                    value: v.to_string(),
                })
            })
            .collect()
    }

    pub fn contains(&self, config: &ConfigPoint) -> bool {
        self.indices_of(config).is_ok()
    }

    /// Every configuration in mixed-radix order (last dimension varies fastest).
    pub fn enumerate(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        let counts = self.value_counts();
        let mut next = if counts.contains(&0) { None } else { Some(vec![0usize; counts.len()]) };
        std::iter::from_fn(move || {
            let current = next.take()?;
            let mut succ = current.clone();
            let mut carried = true;
            for i in (0..succ.len()).rev() {
                succ[i] += 1;
                if succ[i] < counts[i] {
                    carried = false;
                    break;
                }
                succ[i] = 0;
            }
            if !carried {
                next = Some(succ);
            }
            Some(current)
        })
    }

    pub fn onehot_len(&self) -> usize {
        self.dimensions.iter().map(Dimension::value_count).sum()
    }

    pub fn onehot_layout(&self) -> FeatureLayout {
        FeatureLayout {
            encoding: Encoding::OneHot,
            slots: vec![SlotKind::Numeric; self.onehot_len()],
        }
    }

    pub fn mixed_layout(&self) -> FeatureLayout {
        FeatureLayout {
            encoding: Encoding::Mixed,
            slots: self
                .dimensions
                .iter()
                .map(|d| {
                    if d.is_numeric() {
                        SlotKind::Numeric
                    } else {
                        SlotKind::Categorical {
                            levels: d.value_count(),
                        }
                    }
                })
                .collect(),
        }
    }

    pub fn layout(&self, encoding: Encoding) -> FeatureLayout {
        match encoding {
            Encoding::OneHot => self.onehot_layout(),
            Encoding::Mixed => self.mixed_layout(),
        }
    }

    pub fn encode(&self, encoding: Encoding, config: &ConfigPoint) -> Result<Vec<f64>, SpaceError> {
        match encoding {
            Encoding::OneHot => self.encode_onehot(config),
            Encoding::Mixed => self.encode_mixed(config),
        }
    }

    pub fn encode_onehot(&self, config: &ConfigPoint) -> Result<Vec<f64>, SpaceError> {
        let idx = self.indices_of(config)?;
        Ok(self.onehot_from_indices(&idx))
    }

    pub fn onehot_from_indices(&self, indices: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.onehot_len()];
        let mut offset = 0;
        for (d, &i) in self.dimensions.iter().zip(indices) {
            out[offset + i] = 1.0;
            offset += d.value_count();
        }
        out
    }

    /// Numeric dimensions emit their raw value; categorical and boolean
    /// dimensions emit their canonical index.
    pub fn encode_mixed(&self, config: &ConfigPoint) -> Result<Vec<f64>, SpaceError> {
        let idx = self.indices_of(config)?;
        Ok(self
            .dimensions
            .iter()
            .zip(&idx)
            .map(|(d, &i)| {
                if d.is_numeric() {
                    d.value_at(i).as_f64().expect("numeric dimension")
                } else {
                    i as f64
                }
            })
            .collect())
    }

    pub fn decode_onehot(&self, features: &[f64]) -> Result<ConfigPoint, SpaceError> {
        if features.len() != self.onehot_len() {
            return Err(SpaceError::LayoutMismatch(format!(
                "one-hot vector has length {}, expected {}",
                features.len(),
                self.onehot_len()
            )));
        }
        let mut offset = 0;
        let mut idx = Vec::with_capacity(self.dimensions.len());
        for d in &self.dimensions {
            let block = &features[offset..offset + d.value_count()];
            let ones: Vec<usize> = (0..block.len()).filter(|&i| block[i] == 1.0).collect();
            if ones.len() != 1 || block.iter().any(|&x| x != 0.0 && x != 1.0) {
                return Err(SpaceError::LayoutMismatch(format!(
                    "block for `{}` is not one-hot",
                    d.name
                )));
            }
            idx.push(ones[0]);
            offset += d.value_count();
        }
        Ok(self.config_from_indices(&idx))
    }

    pub fn decode_mixed(&self, features: &[f64]) -> Result<ConfigPoint, SpaceError> {
        if features.len() != self.dimensions.len() {
            return Err(SpaceError::LayoutMismatch(format!(
                "mixed vector has length {}, expected {}",
                features.len(),
                self.dimensions.len()
            )));
        }
        let idx = self
            .dimensions
            .iter()
            .zip(features)
            .map(|(d, &x)| {
                let found = if d.is_numeric() {
                    (0..d.value_count()).find(|&i| d.value_at(i).as_f64() == Some(x))
                } else {
                    (x >= 0.0 && x.fract() == 0.0 && (x as usize) < d.value_count())
                        .then_some(x as usize)
                };
                found.ok_or_else(|| SpaceError::ValueNotInSet {
                    name: d.name.clone(),
                    value: x.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.config_from_indices(&idx))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn ads_space_text(layers: usize) -> String {
        let mut s = String::from("name = \"ads\"\nversion = 1\n");
        for i in 0..layers {
            s.push_str(&format!(
                "[[dimensions]]\nname = \"layer_{i:02}_sharding\"\nkind = \"categorical\"\nvalues = [\"FULL_SHARD\", \"SHARD_GRAD_OP\", \"NO_SHARD\"]\nrole = \"parallelism\"\n"
            ));
        }
        s.push_str("[[dimensions]]\nname = \"local_batch_size\"\nkind = \"stepped-int\"\nmin = 1024\nmax = 1536\nstep = 128\n");
        s.push_str("[[dimensions]]\nname = \"storage_reservation\"\nkind = \"categorical\"\nvalues = [");
        for p in 77..=85 {
            s.push_str(&format!("\"fixed_0.{p}\", "));
        }
        s.push_str("\"memory_balanced\"]\n");
        s
    }

    #[test]
    fn parses_ads_space() {
        let space = SearchSpace::parse(&ads_space_text(11)).unwrap();
        assert_eq!(space.dimensions().len(), 13);
        assert_eq!(space.cardinality(), BigUint::from(8_857_350u64));
        assert_eq!(space.onehot_len(), 48);
    }

    #[test]
    fn single_boolean_space() {
        let space = SearchSpace::parse(
            "name = \"b\"\n[[dimensions]]\nname = \"flag\"\nkind = \"boolean\"\n",
        )
        .unwrap();
        assert_eq!(space.cardinality(), BigUint::from(2u32));
    }

    #[test]
    fn rejects_duplicate_names() {
        let text = "name = \"d\"\n[[dimensions]]\nname = \"bs\"\nkind = \"boolean\"\n[[dimensions]]\nname = \"bs\"\nkind = \"boolean\"\n";
        assert!(matches!(SearchSpace::parse(text), Err(SpaceError::DuplicateName(n)) if n == "bs"));
    }

    #[test]
    fn rejects_bad_dimensions() {
        let empty = "name = \"d\"\n[[dimensions]]\nname = \"c\"\nkind = \"categorical\"\nvalues = []\n";
        assert!(matches!(SearchSpace::parse(empty), Err(SpaceError::TooFewValues(n)) if n == "c"));
        let step = "name = \"d\"\n[[dimensions]]\nname = \"x\"\nkind = \"stepped-int\"\nmin = 0\nmax = 10\nstep = 3\n";
        assert!(matches!(SearchSpace::parse(step), Err(SpaceError::InvalidRange { .. })));
        let kind = "name = \"d\"\n[[dimensions]]\nname = \"x\"\nkind = \"continuous\"\n";
        assert!(matches!(SearchSpace::parse(kind), Err(SpaceError::UnknownKind { .. })));
        let dstep = "name = \"d\"\n[[dimensions]]\nname = \"x\"\nkind = \"stepped-decimal\"\nmin = 0.77\nmax = 0.85\nstep = 0.03\n";
        assert!(matches!(SearchSpace::parse(dstep), Err(SpaceError::InvalidRange { .. })));
    }

    #[test]
    fn cardinality_small_cases() {
        let empty = SearchSpace::new("e", 1, vec![]).unwrap();
        assert_eq!(empty.cardinality(), BigUint::from(1u32));
        let two = SearchSpace::new(
            "t",
            1,
            vec![Dimension::boolean("b"), Dimension::categorical("c", ["x", "y", "z"])],
        )
        .unwrap();
        assert_eq!(two.cardinality(), BigUint::from(6u32));
    }

    #[test]
    fn decimal_steps_are_exact() {
        let d = Dimension::stepped_decimal(
            "f",
            "0.77".parse().unwrap(),
            "0.85".parse().unwrap(),
            "0.01".parse().unwrap(),
        )
        .unwrap();
        assert_eq!(d.value_count(), 9);
        assert_eq!(d.value_at(3), Value::Decimal("0.80".parse().unwrap()));
        assert_eq!(d.value_at(3).to_string(), "0.8");
        assert_eq!(d.index_of(&Value::Decimal(Decimal::from_f64(0.83).unwrap())), Some(6));
        assert_eq!(d.index_of(&Value::Decimal("0.835".parse().unwrap())), None);
    }

    #[test]
    fn onehot_blocks() {
        let space = SearchSpace::new(
            "s",
            1,
            vec![Dimension::categorical("c", ["a", "b", "c"]), Dimension::boolean("flag")],
        )
        .unwrap();
        let cfg = ConfigPoint::new(vec![
            ("c".into(), Value::Label("b".into())),
            ("flag".into(), Value::Bool(true)),
        ]);
        assert_eq!(space.encode_onehot(&cfg).unwrap(), vec![0., 1., 0., 0., 1.]);
        let bad = ConfigPoint::new(vec![
            ("c".into(), Value::Label("q".into())),
            ("flag".into(), Value::Bool(true)),
        ]);
        assert!(matches!(space.encode_onehot(&bad), Err(SpaceError::ValueNotInSet { .. })));
    }

    #[test]
    fn mixed_encoding_layout() {
        let space = SearchSpace::new(
            "llm",
            1,
            vec![
                Dimension::stepped_int("seq_len", 2048, 131072, 2048),
                Dimension::categorical("precision", ["BF16", "FP8"]),
            ],
        )
        .unwrap();
        let cfg = ConfigPoint::new(vec![
            ("seq_len".into(), Value::Int(8192)),
            ("precision".into(), Value::Label("FP8".into())),
        ]);
        assert_eq!(space.encode_mixed(&cfg).unwrap(), vec![8192.0, 1.0]);
        assert_eq!(
            space.mixed_layout().slots,
            vec![SlotKind::Numeric, SlotKind::Categorical { levels: 2 }]
        );
        let empty = SearchSpace::new("e", 1, vec![]).unwrap();
        assert!(empty.encode_mixed(&ConfigPoint::default()).unwrap().is_empty());
    }

    #[test]
    fn sampling_is_deterministic() {
        let space = SearchSpace::parse(&ads_space_text(11)).unwrap();
        let a = space.sample_uniform(17);
        assert_eq!(a, space.sample_uniform(17));
        assert_eq!(a.len(), 13);
        assert!(space.contains(&a));
    }

    #[test]
    fn boolean_sampling_is_uniform() {
        let space = SearchSpace::new("b", 1, vec![Dimension::boolean("b")]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let trues = (0..n)
            .filter(|_| space.sample_with(&mut rng).get("b") == Some(&Value::Bool(true)))
            .count();
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((trues as f64 - n as f64 / 2.0).abs() < 3.0 * sigma, "trues = {trues}");
    }

    #[test]
    fn config_json_keeps_dimension_order() {
        let cfg = ConfigPoint::new(vec![
            ("z".into(), Value::Int(3)),
            ("a".into(), Value::Decimal("0.77".parse().unwrap())),
            ("m".into(), Value::Label("FP8".into())),
            ("b".into(), Value::Bool(false)),
        ]);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(json, r#"{"z":3,"a":0.77,"m":"FP8","b":false}"#);
        let back: ConfigPoint = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    fn arb_dimension() -> impl Strategy<Value = Dimension> {
        prop_oneof![
            (2usize..5).prop_map(|n| Dimension::categorical("x", (0..n).map(|i| format!("v{i}")))),
            (-5i64..5, 0i64..6, 1i64..4).prop_map(|(min, k, step)| Dimension::stepped_int(
                "x",
                min,
                min + k * step,
                step
            )),
            (0i64..100, 0i64..5, 1i64..7).prop_map(|(min, k, step)| Dimension::stepped_decimal(
                "x",
                Decimal::new(min, 2),
                Decimal::new(min + k * step, 2),
                Decimal::new(step, 2)
            )
            .unwrap()),
            Just(Dimension::boolean("x")),
            Just(Dimension::int_set("x", [1, 2, 4, 8])),
        ]
    }

    fn arb_space() -> impl Strategy<Value = SearchSpace> {
        prop::collection::vec(arb_dimension(), 0..5).prop_map(|dims| {
            let dims = dims
                .into_iter()
                .enumerate()
                .map(|(i, mut d)| {
                    d.name = format!("d{i}");
                    d
                })
                .collect();
            SearchSpace::new("p", 1, dims).unwrap()
        })
    }

    proptest! {
        #[test]
        fn encodings_round_trip(space in arb_space(), seed in any::<u64>()) {
            let cfg = space.sample_uniform(seed);
            let oh = space.encode_onehot(&cfg).unwrap();
            prop_assert_eq!(oh.len(), space.onehot_len());
            let mut offset = 0;
            for d in space.dimensions() {
                let block_sum: f64 = oh[offset..offset + d.value_count()].iter().sum();
                prop_assert_eq!(block_sum, 1.0);
                offset += d.value_count();
            }
            prop_assert_eq!(space.decode_onehot(&oh).unwrap(), cfg.clone());
            let mixed = space.encode_mixed(&cfg).unwrap();
            prop_assert_eq!(space.decode_mixed(&mixed).unwrap(), cfg.clone());
            let json = serde_json::to_string(&cfg).unwrap();
            let back: ConfigPoint = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back, cfg);
        }

        #[test]
        fn cardinality_matches_enumeration(space in arb_space()) {
            let n = space.enumerate().count();
            prop_assert_eq!(BigUint::from(n), space.cardinality());
        }
    }
}
