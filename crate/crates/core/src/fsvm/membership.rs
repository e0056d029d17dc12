//! Fuzzy membership schemes. A sample's membership `s_i` in `[floor, 1]`
//! scales its box ceiling to `s_i * C`, so low-membership samples can pull
//! the boundary less.

use std::fmt;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::dataset::Direction;
use crate::error::{Error, Result};
use crate::registry::Registry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipSpec {
    pub kind: String,
    pub floor: f64,
}

impl MembershipSpec {
    pub fn new(kind: &str, floor: f64) -> Self {
        Self {
            kind: kind.into(),
            floor,
        }
    }

    pub fn uniform() -> Self {
        Self::new("uniform", 1.0)
    }

    pub fn build(&self) -> Result<Box<dyn Membership>> {
        check_floor(self.floor)?;
        MEMBERSHIPS.build(&self.kind, self)
    }
}

impl fmt::Display for MembershipSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(floor={})", self.kind, self.floor)
    }
}

fn check_floor(floor: f64) -> Result<()> {
    if floor > 0.0 && floor <= 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("membership floor must lie in (0, 1], got {floor}")))
    }
}

pub trait Membership: fmt::Debug + Send + Sync {
    /// Rows are assumed to be in chronological order, oldest first.
    fn weights(&self, features: &[Vec<f64>], labels: &[Direction]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy)]
pub struct Uniform;

impl Membership for Uniform {
    fn weights(&self, features: &[Vec<f64>], _labels: &[Direction]) -> Result<Vec<f64>> {
        Ok(vec![1.0; features.len()])
    }
}

/// Linear ramp from `floor` (oldest) to 1 (newest).
#[derive(Debug, Clone, Copy)]
pub struct TimeDecay {
    pub floor: f64,
}

impl Membership for TimeDecay {
    fn weights(&self, features: &[Vec<f64>], _labels: &[Direction]) -> Result<Vec<f64>> {
        membership_time_decay(features.len(), self.floor)
    }
}

/// Distance to the sample's class centroid, relative to the class radius.
#[derive(Debug, Clone, Copy)]
pub struct ClassCenter {
    pub floor: f64,
}

impl Membership for ClassCenter {
    fn weights(&self, features: &[Vec<f64>], labels: &[Direction]) -> Result<Vec<f64>> {
        membership_class_center(features, labels, self.floor)
    }
}

pub type MembershipRegistry = Registry<MembershipSpec, Box<dyn Membership>>;

pub fn builtin_memberships() -> MembershipRegistry {
    let mut reg = MembershipRegistry::new("membership");
    reg.register("uniform", |_| Ok(Box::new(Uniform)));
    reg.register("time_decay", |s| Ok(Box::new(TimeDecay { floor: s.floor })));
    reg.register("class_center", |s| Ok(Box::new(ClassCenter { floor: s.floor })));
    reg
}

static MEMBERSHIPS: LazyLock<MembershipRegistry> = LazyLock::new(builtin_memberships);

/// `s_i = floor + (1 - floor) * (i - 1) / (n - 1)`, with `[1]` for a single
/// sample.
pub fn membership_time_decay(n: usize, floor: f64) -> Result<Vec<f64>> {
    check_floor(floor)?;
    if n == 0 {
        return Err(Error::Parameter("time-decay membership needs n >= 1".into()));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let last = (n - 1) as f64;
    Ok((0..n)
        .map(|i| if i == n - 1 { 1.0 } else { floor + (1.0 - floor) * i as f64 / last })
        .collect())
}

const RADIUS_EPS: f64 = 1e-12;

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `s_i = 1 - (1 - floor) * |x_i - c_y| / (r_y + 1e-12)` where `c_y` is the
/// class mean and `r_y` the largest distance to it.
pub fn membership_class_center(features: &[Vec<f64>], labels: &[Direction], floor: f64) -> Result<Vec<f64>> {
    check_floor(floor)?;
    if features.len() != labels.len() {
        return Err(Error::Shape {
            expected: features.len(),
            got: labels.len(),
        });
    }
    let dim = features.first().map_or(0, Vec::len);
    let mut centers = Vec::with_capacity(2);
    for class in [Direction::Up, Direction::Down] {
        let members: Vec<&Vec<f64>> = features
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == class)
            .map(|(x, _)| x)
            .collect();
        if members.is_empty() {
            return Err(Error::Class(format!("class-center membership needs both classes; no {class} samples")));
        }
        let mut center = vec![0.0; dim];
        for x in &members {
            for (c, v) in center.iter_mut().zip(x.iter()) {
                *c += v;
            }
        }
        center.iter_mut().for_each(|c| *c /= members.len() as f64);
        let radius = members.iter().map(|x| distance(x, &center)).fold(0.0, f64::max);
        centers.push((class, center, radius));
    }
    Ok(features
        .iter()
        .zip(labels)
        .map(|(x, l)| {
            let (_, center, radius) = centers.iter().find(|(c, _, _)| c == l).expect("both classes present");
            1.0 - (1.0 - floor) * distance(x, center) / (radius + RADIUS_EPS)
        })
        .collect())
}
