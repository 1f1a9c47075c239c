use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum DistanceMetric {
    /// `1 - u.v / (|u| |v|)`, in `[0, 2]`.
    #[default]
    #[serde(rename = "cosine")]
    Cosine,
    #[serde(rename = "euclidean")]
    Euclidean,
    #[serde(rename = "sqeuclidean")]
    SquaredEuclidean,
}

impl DistanceMetric {
    pub const ALL: [DistanceMetric; 3] = [
        DistanceMetric::Cosine,
        DistanceMetric::Euclidean,
        DistanceMetric::SquaredEuclidean,
    ];

    pub fn tag(self) -> u8 {
        match self {
            DistanceMetric::Cosine => 0,
            DistanceMetric::Euclidean => 1,
            DistanceMetric::SquaredEuclidean => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            DistanceMetric::Cosine => "cosine",
            DistanceMetric::Euclidean => "euclidean",
            DistanceMetric::SquaredEuclidean => "sqeuclidean",
        }
    }

    /// Largest value this metric can take, if bounded.
    pub fn max_distance(self) -> f64 {
        match self {
            DistanceMetric::Cosine => 2.0,
            _ => f64::INFINITY,
        }
    }

    /// Distance between two equal-length vectors, accumulated in `f64`.
    pub fn distance<T: Copy + Into<f64>>(self, u: &[T], v: &[T]) -> Result<f64> {
        if u.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: u.len(),
                found: v.len(),
            });
        }
        match self {
            DistanceMetric::Cosine => {
                let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
                for (&a, &b) in u.iter().zip(v) {
                    let (a, b) = (a.into(), b.into());
                    dot += a * b;
                    nu += a * a;
                    nv += b * b;
                }
                cosine_from_parts(dot, nu, nv)
            }
            DistanceMetric::Euclidean => Ok(squared_l2(u, v).sqrt()),
            DistanceMetric::SquaredEuclidean => Ok(squared_l2(u, v)),
        }
    }

    /// Adds `scale * d(dist)/du` to `grad_u` and `scale * d(dist)/dv` to
    /// `grad_v`, where `dist = self.distance(u, v)`.
    ///
    /// At `u == v` the Euclidean distance is not differentiable; the zero
    /// subgradient is used.
    pub fn accumulate_gradient(
        self,
        u: &[f64],
        v: &[f64],
        dist: f64,
        scale: f64,
        grad_u: &mut [f64],
        grad_v: &mut [f64],
    ) {
        match self {
            DistanceMetric::Cosine => {
                let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
                for (&a, &b) in u.iter().zip(v) {
                    dot += a * b;
                    nu += a * a;
                    nv += b * b;
                }
                let (lu, lv) = (nu.sqrt(), nv.sqrt());
                let inv = 1.0 / (lu * lv);
                // d/du [-(u.v)/(|u||v|)] = -(v/(|u||v|) - (u.v) u / (|u|^3 |v|))
                let cu = dot * inv / nu;
                let cv = dot * inv / nv;
                for i in 0..u.len() {
                    grad_u[i] += scale * (cu * u[i] - v[i] * inv);
                    grad_v[i] += scale * (cv * v[i] - u[i] * inv);
                }
            }
            DistanceMetric::Euclidean => {
                if dist > 0.0 {
                    let c = scale / dist;
                    for i in 0..u.len() {
                        let d = c * (u[i] - v[i]);
                        grad_u[i] += d;
                        grad_v[i] -= d;
                    }
                }
            }
            DistanceMetric::SquaredEuclidean => {
                for i in 0..u.len() {
                    let d = 2.0 * scale * (u[i] - v[i]);
                    grad_u[i] += d;
                    grad_v[i] -= d;
                }
            }
        }
    }
}

pub(crate) fn cosine_from_parts(dot: f64, nu: f64, nv: f64) -> Result<f64> {
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((1.0 - dot / (nu * nv).sqrt()).clamp(0.0, 2.0))
}

fn squared_l2<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(&a, &b)| {
            let d = a.into() - b.into();
            d * d
        })
        .sum()
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(DistanceMetric::Cosine),
            "euclidean" => Ok(DistanceMetric::Euclidean),
            "sqeuclidean" | "squared-euclidean" => Ok(DistanceMetric::SquaredEuclidean),
            other => Err(Error::InvalidConfig(format!("unknown metric {other:?}"))),
        }
    }
}
