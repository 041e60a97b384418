//! Built-in data-generating designs.
//!
//! Each design fixes a latent layout and a composition map τ, and can be
//! instantiated on any shape of its order. Designs are what the harness
//! configuration refers to by `family`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::dgp::{Composition, DgpSpec};
use super::latent::{CellLatent, LatentComponent, LatentDist, LatentLayout};
use super::lattice::{Mask, Shape};
use crate::error::{Error, Result};

fn rademacher() -> LatentDist {
    LatentDist::Rademacher
}

fn default_order() -> usize {
    2
}

/// Sum over masks of `positions` weighted by the mask level scale.
#[derive(Debug, Clone)]
struct WeightedSum {
    terms: Vec<(usize, f64)>,
}

impl WeightedSum {
    fn eval(&self, latent: &CellLatent) -> f64 {
        self.terms.iter().map(|&(p, w)| w * latent.values[p]).sum()
    }
}

fn level_scale(scales: &[f64], e: Mask) -> f64 {
    scales.get(e.weight() - 1).copied().unwrap_or(1.0)
}

fn check_order(order: usize) -> Result<()> {
    if order == 0 || order > Mask::MAX_ORDER {
        return Err(Error::Config(format!("design order {order} out of range")));
    }
    Ok(())
}

/// X = Σ_e s_{‖e‖₀} U_e with one scalar factor per mask.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdditiveDesign {
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "rademacher")]
    pub factor: LatentDist,
    /// Scale per mask level ℰ_1, ℰ_2, ...; missing levels default to 1.
    #[serde(default)]
    pub level_scales: Vec<f64>,
    #[serde(default)]
    pub shift: f64,
    #[serde(default = "AdditiveDesign::default_field")]
    pub field: String,
}

impl AdditiveDesign {
    fn default_field() -> String {
        "x".into()
    }

    pub fn new(order: usize, factor: LatentDist) -> Self {
        Self { order, factor, level_scales: Vec::new(), shift: 0.0, field: Self::default_field() }
    }

    pub fn spec(&self, shape: Shape) -> Result<DgpSpec> {
        check_order(self.order)?;
        let layout = LatentLayout::new(self.order, |_| vec![LatentComponent::new("u", self.factor.clone())])?;
        let terms = Mask::all_nonzero(self.order)
            .into_iter()
            .map(|e| (layout.range(e).start, level_scale(&self.level_scales, e)))
            .collect();
        let comp = AdditiveComposition {
            fields: vec![self.field.clone()],
            shift: self.shift,
            sum: WeightedSum { terms },
        };
        DgpSpec::new(shape, layout, Arc::new(comp))
    }
}

#[derive(Debug)]
struct AdditiveComposition {
    fields: Vec<String>,
    shift: f64,
    sum: WeightedSum,
}

impl Composition for AdditiveComposition {
    fn fields(&self) -> &[String] {
        &self.fields
    }

    fn compose(&self, latent: &CellLatent, out: &mut [f64]) {
        out[0] = self.shift + self.sum.eval(latent);
    }
}

/// X = Π_k U_{e_k} + noise_scale · U_{(1,...,1)}.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProductDesign {
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "rademacher")]
    pub factor: LatentDist,
    #[serde(default = "rademacher")]
    pub noise: LatentDist,
    #[serde(default)]
    pub noise_scale: f64,
}

impl ProductDesign {
    pub fn new(order: usize, factor: LatentDist) -> Self {
        Self { order, factor, noise: rademacher(), noise_scale: 0.0 }
    }

    pub fn spec(&self, shape: Shape) -> Result<DgpSpec> {
        check_order(self.order)?;
        let full = Mask::full(self.order);
        let layout = LatentLayout::new(self.order, |e| {
            if e.weight() == 1 {
                vec![LatentComponent::new("u", self.factor.clone())]
            } else if e == full && self.order > 1 {
                vec![LatentComponent::new("noise", self.noise.clone())]
            } else {
                Vec::new()
            }
        })?;
        let factors = (0..self.order).map(|k| layout.range(Mask::unit(self.order, k)).start).collect();
        let noise = if self.order > 1 { Some(layout.range(full).start) } else { None };
        let comp = ProductComposition { fields: vec!["x".into()], factors, noise, noise_scale: self.noise_scale };
        DgpSpec::new(shape, layout, Arc::new(comp))
    }
}

#[derive(Debug)]
struct ProductComposition {
    fields: Vec<String>,
    factors: Vec<usize>,
    noise: Option<usize>,
    noise_scale: f64,
}

impl Composition for ProductComposition {
    fn fields(&self) -> &[String] {
        &self.fields
    }

    fn compose(&self, latent: &CellLatent, out: &mut [f64]) {
        let prod: f64 = self.factors.iter().map(|&p| latent.values[p]).product();
        let noise = self.noise.map_or(0.0, |p| self.noise_scale * latent.values[p]);
        out[0] = prod + noise;
    }
}

/// y = θ₀ + Σ_e s_{‖e‖₀} U_e.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocationDesign {
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default)]
    pub theta0: f64,
    #[serde(default = "rademacher")]
    pub factor: LatentDist,
    #[serde(default)]
    pub level_scales: Vec<f64>,
}

impl LocationDesign {
    pub fn spec(&self, shape: Shape) -> Result<DgpSpec> {
        AdditiveDesign {
            order: self.order,
            factor: self.factor.clone(),
            level_scales: self.level_scales.clone(),
            shift: self.theta0,
            field: "y".into(),
        }
        .spec(shape)
    }
}

/// Linear IV with clustered instruments and an endogenous regressor:
///
/// z_j = Σ_e U_e[z_j], u = Σ_e U_e[u], d = Σ_j π_j z_j + ρ u + Σ_e U_e[v],
/// y = θ₀ d + u.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IvDesign {
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "IvDesign::default_theta0")]
    pub theta0: f64,
    /// First-stage coefficients, one per instrument.
    #[serde(default = "IvDesign::default_pi")]
    pub pi: Vec<f64>,
    #[serde(default = "IvDesign::default_rho")]
    pub rho: f64,
    #[serde(default = "rademacher")]
    pub factor: LatentDist,
}

impl Default for IvDesign {
    fn default() -> Self {
        Self {
            order: 2,
            theta0: Self::default_theta0(),
            pi: Self::default_pi(),
            rho: Self::default_rho(),
            factor: rademacher(),
        }
    }
}

impl IvDesign {
    fn default_theta0() -> f64 {
        1.0
    }

    fn default_pi() -> Vec<f64> {
        vec![1.0]
    }

    fn default_rho() -> f64 {
        0.5
    }

    pub fn spec(&self, shape: Shape) -> Result<DgpSpec> {
        check_order(self.order)?;
        if self.pi.is_empty() {
            return Err(Error::Config("iv design needs at least one instrument".into()));
        }
        let m = self.pi.len();
        let layout = LatentLayout::new(self.order, |_| {
            let mut c: Vec<LatentComponent> =
                (1..=m).map(|j| LatentComponent::new(format!("z{j}"), self.factor.clone())).collect();
            c.push(LatentComponent::new("u", self.factor.clone()));
            c.push(LatentComponent::new("v", self.factor.clone()));
            c
        })?;
        let masks = Mask::all_nonzero(self.order);
        let sum_of = |name: &str| WeightedSum {
            terms: masks.iter().map(|&e| (layout.position(e, name).expect("component"), 1.0)).collect(),
        };
        let mut fields = vec!["y".to_string(), "d".to_string()];
        fields.extend((1..=m).map(|j| format!("z{j}")));
        let comp = IvComposition {
            fields,
            z: (1..=m).map(|j| sum_of(&format!("z{j}"))).collect(),
            u: sum_of("u"),
            v: sum_of("v"),
            pi: self.pi.clone(),
            rho: self.rho,
            theta0: self.theta0,
        };
        DgpSpec::new(shape, layout, Arc::new(comp))
    }
}

#[derive(Debug)]
struct IvComposition {
    fields: Vec<String>,
    z: Vec<WeightedSum>,
    u: WeightedSum,
    v: WeightedSum,
    pi: Vec<f64>,
    rho: f64,
    theta0: f64,
}

impl Composition for IvComposition {
    fn fields(&self) -> &[String] {
        &self.fields
    }

    fn compose(&self, latent: &CellLatent, out: &mut [f64]) {
        let u = self.u.eval(latent);
        let mut d = self.rho * u + self.v.eval(latent);
        for (j, (z, pi)) in self.z.iter().zip(&self.pi).enumerate() {
            let zj = z.eval(latent);
            out[2 + j] = zj;
            d += pi * zj;
        }
        out[1] = d;
        out[0] = self.theta0 * d + u;
    }
}

/// Partially linear regression with multiway clustered errors.
///
/// Covariates x_j = (2^K − 1)^{-1/2} Σ_e U_e[x_j]. Every mask below the
/// full one carries cluster effects a, b; the full mask carries idiosyncratic
/// noise ε, v. Then
///
/// V = s Σ_{e≠1} U_e[b] + U_1[v],  ζ = s Σ_{e≠1} U_e[a] + U_1[ε],
/// d = x'β_m + V,  y = θ₀ d + x'β_g + ζ.
///
/// The orthogonal score at the truth equals ζV, whose conditional mean given
/// the dimension-k factors is s² a_k b_k.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlrDesign {
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "PlrDesign::default_theta0")]
    pub theta0: f64,
    #[serde(default = "PlrDesign::default_beta_m")]
    pub beta_m: Vec<f64>,
    #[serde(default = "PlrDesign::default_beta_g")]
    pub beta_g: Vec<f64>,
    #[serde(default = "rademacher")]
    pub covariate: LatentDist,
    #[serde(default = "rademacher")]
    pub cluster_effect: LatentDist,
    #[serde(default = "rademacher")]
    pub noise: LatentDist,
    #[serde(default = "PlrDesign::default_cluster_scale")]
    pub cluster_scale: f64,
}

impl Default for PlrDesign {
    fn default() -> Self {
        Self {
            order: 2,
            theta0: Self::default_theta0(),
            beta_m: Self::default_beta_m(),
            beta_g: Self::default_beta_g(),
            covariate: rademacher(),
            cluster_effect: rademacher(),
            noise: rademacher(),
            cluster_scale: Self::default_cluster_scale(),
        }
    }
}

impl PlrDesign {
    fn default_theta0() -> f64 {
        0.5
    }

    fn default_beta_m() -> Vec<f64> {
        vec![0.5, 0.5, 0.0, 0.0]
    }

    fn default_beta_g() -> Vec<f64> {
        vec![0.5, 0.0, 0.5, 0.0]
    }

    fn default_cluster_scale() -> f64 {
        1.0
    }

    pub fn covariate_count(&self) -> usize {
        self.beta_m.len()
    }

    pub fn spec(&self, shape: Shape) -> Result<DgpSpec> {
        check_order(self.order)?;
        let p = self.beta_m.len();
        if p == 0 || self.beta_g.len() != p {
            return Err(Error::Config("plr design needs equal-length, non-empty beta_m and beta_g".into()));
        }
        let full = Mask::full(self.order);
        let layout = LatentLayout::new(self.order, |e| {
            let mut c: Vec<LatentComponent> =
                (1..=p).map(|j| LatentComponent::new(format!("x{j}"), self.covariate.clone())).collect();
            if e == full {
                c.push(LatentComponent::new("eps", self.noise.clone()));
                c.push(LatentComponent::new("v", self.noise.clone()));
            } else {
                c.push(LatentComponent::new("a", self.cluster_effect.clone()));
                c.push(LatentComponent::new("b", self.cluster_effect.clone()));
            }
            c
        })?;
        let masks = Mask::all_nonzero(self.order);
        let norm = 1.0 / (masks.len() as f64).sqrt();
        let x = (1..=p)
            .map(|j| WeightedSum {
                terms: masks
                    .iter()
                    .map(|&e| (layout.position(e, &format!("x{j}")).expect("component"), norm))
                    .collect(),
            })
            .collect();
        let clustered = |name: &str, idio: &str| {
            let mut terms: Vec<(usize, f64)> = masks
                .iter()
                .filter(|&&e| e != full)
                .map(|&e| (layout.position(e, name).expect("component"), self.cluster_scale))
                .collect();
            terms.push((layout.position(full, idio).expect("component"), 1.0));
            WeightedSum { terms }
        };
        let mut fields = vec!["y".to_string(), "d".to_string()];
        fields.extend((1..=p).map(|j| format!("x{j}")));
        let comp = PlrComposition {
            fields,
            x,
            zeta: clustered("a", "eps"),
            vee: clustered("b", "v"),
            beta_m: self.beta_m.clone(),
            beta_g: self.beta_g.clone(),
            theta0: self.theta0,
        };
        DgpSpec::new(shape, layout, Arc::new(comp))
    }
}

#[derive(Debug)]
struct PlrComposition {
    fields: Vec<String>,
    x: Vec<WeightedSum>,
    zeta: WeightedSum,
    vee: WeightedSum,
    beta_m: Vec<f64>,
    beta_g: Vec<f64>,
    theta0: f64,
}

impl Composition for PlrComposition {
    fn fields(&self) -> &[String] {
        &self.fields
    }

    fn compose(&self, latent: &CellLatent, out: &mut [f64]) {
        let mut m = 0.0;
        let mut g = 0.0;
        for (j, xs) in self.x.iter().enumerate() {
            let xj = xs.eval(latent);
            out[2 + j] = xj;
            m += self.beta_m[j] * xj;
            g += self.beta_g[j] * xj;
        }
        let d = m + self.vee.eval(latent);
        out[1] = d;
        out[0] = self.theta0 * d + g + self.zeta.eval(latent);
    }
}

/// A named design family, as selected in configuration files.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Design {
    Additive(AdditiveDesign),
    Product(ProductDesign),
    Location(LocationDesign),
    Iv(IvDesign),
    Plr(PlrDesign),
}

impl Design {
    pub fn order(&self) -> usize {
        match self {
            Self::Additive(d) => d.order,
            Self::Product(d) => d.order,
            Self::Location(d) => d.order,
            Self::Iv(d) => d.order,
            Self::Plr(d) => d.order,
        }
    }

    pub fn spec(&self, shape: Shape) -> Result<DgpSpec> {
        if shape.order() != self.order() {
            return Err(Error::Config(format!(
                "shape {shape} does not match design order {}",
                self.order()
            )));
        }
        match self {
            Self::Additive(d) => d.spec(shape),
            Self::Product(d) => d.spec(shape),
            Self::Location(d) => d.spec(shape),
            Self::Iv(d) => d.spec(shape),
            Self::Plr(d) => d.spec(shape),
        }
    }

    /// True parameter, when the design has one.
    pub fn theta0(&self) -> Option<Vec<f64>> {
        match self {
            Self::Location(d) => Some(vec![d.theta0]),
            Self::Iv(d) => Some(vec![d.theta0]),
            Self::Plr(d) => Some(vec![d.theta0]),
            Self::Additive(_) | Self::Product(_) => None,
        }
    }
}
