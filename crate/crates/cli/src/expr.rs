//! Per-wall term lists for boundary and target data.
//!
//! A term is `coef · x^px · y^py` times optional `sin(kπ·)` / `cos(kπ·)`
//! factors in `x`, `y` and `t`. A wall value is either a number or a list of
//! terms, summed.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use slipctl_core::fields::BoundaryScalar;
use slipctl_core::mesh::{BoundaryNode, Grid, Wall};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub coef: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub px: u32,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub py: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sin_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cos_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sin_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cos_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sin_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cos_t: Option<f64>,
}

fn is_zero(p: &u32) -> bool {
    *p == 0
}

impl Term {
    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        let trig = |f: fn(f64) -> f64, k: Option<f64>, z: f64| k.map_or(1.0, |k| f(k * PI * z));
        self.coef
            * x.powi(self.px as i32)
            * y.powi(self.py as i32)
            * trig(f64::sin, self.sin_x, x)
            * trig(f64::cos, self.cos_x, x)
            * trig(f64::sin, self.sin_y, y)
            * trig(f64::cos, self.cos_y, y)
            * trig(f64::sin, self.sin_t, t)
            * trig(f64::cos, self.cos_t, t)
    }

    fn check(&self) -> Result<(), String> {
        let finite = [self.sin_x, self.cos_x, self.sin_y, self.cos_y, self.sin_t, self.cos_t]
            .iter()
            .flatten()
            .chain(std::iter::once(&self.coef))
            .all(|v| v.is_finite());
        if finite {
            Ok(())
        } else {
            Err("term coefficients and wavenumbers must be finite".into())
        }
    }
}

pub fn eval_terms(terms: &[Term], x: f64, y: f64, t: f64) -> f64 {
    terms.iter().map(|term| term.eval(x, y, t)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WallValue {
    Constant(f64),
    Terms(Vec<Term>),
}

impl Default for WallValue {
    fn default() -> Self {
        WallValue::Constant(0.0)
    }
}

impl WallValue {
    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        match self {
            WallValue::Constant(c) => *c,
            WallValue::Terms(terms) => eval_terms(terms, x, y, t),
        }
    }

    fn check(&self) -> Result<(), String> {
        match self {
            WallValue::Constant(c) if !c.is_finite() => Err("wall constants must be finite".into()),
            WallValue::Constant(_) => Ok(()),
            WallValue::Terms(terms) => terms.iter().try_for_each(Term::check),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WallTable {
    pub bottom: WallValue,
    pub right: WallValue,
    pub top: WallValue,
    pub left: WallValue,
}

impl WallTable {
    fn wall(&self, wall: Wall) -> &WallValue {
        match wall {
            Wall::Bottom => &self.bottom,
            Wall::Right => &self.right,
            Wall::Top => &self.top,
            Wall::Left => &self.left,
        }
    }

    pub fn eval(&self, node: &BoundaryNode, t: f64) -> f64 {
        self.wall(node.wall).eval(node.x, node.y, t)
    }

    pub fn sample(&self, grid: &Grid, t: f64) -> BoundaryScalar {
        BoundaryScalar::from_fn(grid, |node| self.eval(node, t))
    }

    pub fn check(&self) -> Result<(), String> {
        [&self.bottom, &self.right, &self.top, &self.left]
            .iter()
            .try_for_each(|w| w.check())
    }
}
