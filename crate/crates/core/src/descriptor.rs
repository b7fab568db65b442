//! JSON descriptors for families and instances.
//!
//! Parsing walks `serde_json::Value` by hand so that every error names the
//! offending field by its path, e.g. `family.lambdas[3][1]`.

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::family::{self, EigencurveFamily, DEFAULT_RIDGE_KNOTS};
use crate::risk::{self, SpectralInstance};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum FamilyDescriptor {
    Explicit {
        n: usize,
        knots: Vec<f64>,
        lambdas: Vec<Vec<f64>>,
    },
    Ridge {
        design_eigenvalues: Vec<f64>,
        knots: usize,
    },
    /// Ridge with design eigenvalues `d_i² = i^{-2·exponent}`.
    RidgePolynomial {
        n: usize,
        exponent: f64,
        knots: usize,
    },
    Interpolated {
        smoothers: Vec<Vec<f64>>,
    },
    UniformShrink {
        n: usize,
    },
    Projection {
        n: usize,
    },
}

impl FamilyDescriptor {
    pub fn parse(value: &Value) -> Result<Self> {
        Self::parse_at(value, "family")
    }

    pub fn parse_at(value: &Value, path: &str) -> Result<Self> {
        let obj = object(value, path)?;
        let kind = match obj.get("type") {
            None => "explicit",
            Some(Value::String(s)) => s.as_str(),
            Some(_) => return Err(Error::field(join(path, "type"), "expected a string")),
        };
        let knots_or_default = |obj: &Map<String, Value>| -> Result<usize> {
            match obj.get("knots") {
                None => Ok(DEFAULT_RIDGE_KNOTS),
                Some(v) => usize_value(v, &join(path, "knots")),
            }
        };
        Ok(match kind {
            "explicit" => FamilyDescriptor::Explicit {
                n: usize_field(obj, path, "n")?,
                knots: vec_field(obj, path, "knots")?,
                lambdas: matrix_field(obj, path, "lambdas")?,
            },
            "ridge" => FamilyDescriptor::Ridge {
                design_eigenvalues: vec_field(obj, path, "design_eigenvalues")?,
                knots: knots_or_default(obj)?,
            },
            "ridge-polynomial" => FamilyDescriptor::RidgePolynomial {
                n: usize_field(obj, path, "n")?,
                exponent: match obj.get("exponent") {
                    None => 1.0,
                    Some(v) => f64_value(v, &join(path, "exponent"))?,
                },
                knots: knots_or_default(obj)?,
            },
            "interpolated" => FamilyDescriptor::Interpolated {
                smoothers: matrix_field(obj, path, "smoothers")?,
            },
            "uniform-shrink" => FamilyDescriptor::UniformShrink {
                n: usize_field(obj, path, "n")?,
            },
            "projection" => FamilyDescriptor::Projection {
                n: usize_field(obj, path, "n")?,
            },
            other => {
                return Err(Error::field(
                    join(path, "type"),
                    format!(
                        "unknown family type `{other}` (expected explicit, ridge, ridge-polynomial, \
                         interpolated, uniform-shrink or projection)"
                    ),
                ))
            }
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::parse(&parse_json(text, "family")?)
    }

    pub fn build(&self) -> Result<EigencurveFamily> {
        match self {
            FamilyDescriptor::Explicit { n, knots, lambdas } => {
                EigencurveFamily::from_parts(*n, knots.clone(), lambdas.clone())
            }
            FamilyDescriptor::Ridge {
                design_eigenvalues,
                knots,
            } => family::ridge_family_with_knots(design_eigenvalues, *knots),
            FamilyDescriptor::RidgePolynomial { n, exponent, knots } => {
                if *n == 0 {
                    return Err(Error::field("family.n", "must be positive"));
                }
                if !exponent.is_finite() {
                    return Err(Error::field("family.exponent", "must be finite"));
                }
                let design: Vec<f64> = (1..=*n).map(|i| (i as f64).powf(-2.0 * exponent)).collect();
                family::ridge_family_with_knots(&design, *knots)
            }
            FamilyDescriptor::Interpolated { smoothers } => family::build_interpolated_family(smoothers),
            FamilyDescriptor::UniformShrink { n } => {
                check_positive_n(*n)?;
                Ok(EigencurveFamily::uniform_shrink(*n))
            }
            FamilyDescriptor::Projection { n } => {
                check_positive_n(*n)?;
                Ok(EigencurveFamily::projection(*n))
            }
        }
    }
}

fn check_positive_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::field("family.n", "must be positive"));
    }
    Ok(())
}

/// Named signal shapes in spectral coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "pattern", rename_all = "kebab-case")]
pub enum MuPattern {
    /// `(A, 0, …, 0)`.
    Spike { amplitude: f64 },
    /// `ρ_i = A i^{-p}`.
    PolynomialDecay { amplitude: f64, p: f64 },
    /// `A (1, …, 1) / √n`.
    UniformSignal { amplitude: f64 },
}

impl MuPattern {
    pub fn rho(&self, n: usize) -> Vec<f64> {
        match *self {
            MuPattern::Spike { amplitude } => {
                let mut rho = vec![0.0; n];
                if n > 0 {
                    rho[0] = amplitude;
                }
                rho
            }
            MuPattern::PolynomialDecay { amplitude, p } => {
                (1..=n).map(|i| amplitude * (i as f64).powf(-p)).collect()
            }
            MuPattern::UniformSignal { amplitude } => vec![amplitude / (n as f64).sqrt(); n],
        }
    }

    pub fn label(&self) -> String {
        match self {
            MuPattern::Spike { .. } => "spike".into(),
            MuPattern::PolynomialDecay { p, .. } => format!("polynomial-decay-{p}"),
            MuPattern::UniformSignal { .. } => "uniform-signal".into(),
        }
    }

    fn parse_at(obj: &Map<String, Value>, path: &str) -> Result<Self> {
        let name = match obj.get("pattern") {
            Some(Value::String(s)) => s.as_str(),
            _ => return Err(Error::field(join(path, "pattern"), "expected a string")),
        };
        let amplitude = f64_field(obj, path, "amplitude")?;
        Ok(match name {
            "spike" => MuPattern::Spike { amplitude },
            "uniform-signal" => MuPattern::UniformSignal { amplitude },
            "polynomial-decay" => MuPattern::PolynomialDecay {
                amplitude,
                p: f64_field(obj, path, "p")?,
            },
            other => {
                return Err(Error::field(
                    join(path, "pattern"),
                    format!("unknown pattern `{other}` (expected spike, polynomial-decay or uniform-signal)"),
                ))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum InstanceDescriptor {
    Spectral {
        rho: Vec<f64>,
        sigma2: f64,
    },
    Basis {
        mu: Vec<f64>,
        basis: Vec<Vec<f64>>,
        sigma2: f64,
    },
    Pattern {
        #[serde(flatten)]
        pattern: MuPattern,
        sigma2: f64,
    },
}

impl InstanceDescriptor {
    pub fn parse(value: &Value) -> Result<Self> {
        Self::parse_at(value, "instance")
    }

    pub fn parse_at(value: &Value, path: &str) -> Result<Self> {
        let obj = object(value, path)?;
        let sigma2 = f64_field(obj, path, "sigma2")?;
        if obj.contains_key("pattern") {
            Ok(InstanceDescriptor::Pattern {
                pattern: MuPattern::parse_at(obj, path)?,
                sigma2,
            })
        } else if obj.contains_key("rho") {
            Ok(InstanceDescriptor::Spectral {
                rho: vec_field(obj, path, "rho")?,
                sigma2,
            })
        } else if obj.contains_key("mu") {
            Ok(InstanceDescriptor::Basis {
                mu: vec_field(obj, path, "mu")?,
                basis: matrix_field(obj, path, "basis")?,
                sigma2,
            })
        } else {
            Err(Error::field(path, "expected one of `rho`, `mu` with `basis`, or `pattern`"))
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::parse(&parse_json(text, "instance")?)
    }

    /// Spectral instance of dimension `n` (the family's).
    pub fn build(&self, n: usize) -> Result<SpectralInstance> {
        let inst = match self {
            InstanceDescriptor::Spectral { rho, sigma2 } => SpectralInstance::new(rho.clone(), *sigma2)?,
            InstanceDescriptor::Basis { mu, basis, sigma2 } => risk::rotate_to_spectral(basis, mu, *sigma2)?,
            InstanceDescriptor::Pattern { pattern, sigma2 } => SpectralInstance::new(pattern.rho(n), *sigma2)?,
        };
        if inst.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: inst.n(),
            });
        }
        Ok(inst)
    }

    pub fn label(&self) -> String {
        match self {
            InstanceDescriptor::Spectral { .. } => "spectral".into(),
            InstanceDescriptor::Basis { .. } => "basis".into(),
            InstanceDescriptor::Pattern { pattern, .. } => pattern.label(),
        }
    }
}

pub(crate) fn parse_json(text: &str, what: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::field(what, format!("malformed JSON: {e}")))
}

pub(crate) fn join(path: &str, field: &str) -> String {
    if path.is_empty() {
        field.to_string()
    } else {
        format!("{path}.{field}")
    }
}

pub(crate) fn object<'a>(value: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    value
        .as_object()
        .ok_or_else(|| Error::field(path, "expected a JSON object"))
}

fn required<'a>(obj: &'a Map<String, Value>, path: &str, field: &str) -> Result<&'a Value> {
    obj.get(field)
        .ok_or_else(|| Error::field(join(path, field), "missing required field"))
}

pub(crate) fn f64_value(v: &Value, path: &str) -> Result<f64> {
    match v.as_f64() {
        Some(x) if x.is_finite() => Ok(x),
        _ => Err(Error::field(path, format!("expected a finite number, got {v}"))),
    }
}

pub(crate) fn usize_value(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| Error::field(path, format!("expected a nonnegative integer, got {v}")))
}

pub(crate) fn u64_value(v: &Value, path: &str) -> Result<u64> {
    v.as_u64()
        .ok_or_else(|| Error::field(path, format!("expected a nonnegative integer, got {v}")))
}

pub(crate) fn vec_value(v: &Value, path: &str) -> Result<Vec<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::field(path, "expected an array of numbers"))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| f64_value(x, &format!("{path}[{i}]")))
        .collect()
}

fn matrix_value(v: &Value, path: &str) -> Result<Vec<Vec<f64>>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::field(path, "expected an array of arrays"))?;
    arr.iter()
        .enumerate()
        .map(|(i, row)| vec_value(row, &format!("{path}[{i}]")))
        .collect()
}

pub(crate) fn f64_field(obj: &Map<String, Value>, path: &str, field: &str) -> Result<f64> {
    f64_value(required(obj, path, field)?, &join(path, field))
}

fn usize_field(obj: &Map<String, Value>, path: &str, field: &str) -> Result<usize> {
    usize_value(required(obj, path, field)?, &join(path, field))
}

fn vec_field(obj: &Map<String, Value>, path: &str, field: &str) -> Result<Vec<f64>> {
    vec_value(required(obj, path, field)?, &join(path, field))
}

fn matrix_field(obj: &Map<String, Value>, path: &str, field: &str) -> Result<Vec<Vec<f64>>> {
    matrix_value(required(obj, path, field)?, &join(path, field))
}
