//! Catalog of model problems: coefficients, sources, interface data, exact
//! solutions and the trial compositions that enforce the constraints.

mod poly;
pub mod singular;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
pub use poly::{Factor, Jet, Poly};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Rect(Rect),
    /// Closed unit disk centred at the origin.
    UnitDisk,
    /// Domain minus the unit disk.
    OutsideUnitDisk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subdomain {
    pub label: String,
    pub alpha: f64,
    pub region: Region,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curve {
    /// Axis-aligned segment from `p0` to `p1` with unit normal pointing from side `a` into side `b`.
    Segment {
        p0: [f64; 2],
        p1: [f64; 2],
        normal: [f64; 2],
    },
    /// The unit circle; the normal is radial, pointing out of the disk.
    UnitCircle,
}

/// An internal interface between subdomains `side_a` and `side_b`. Jumps are
/// taken as side `a` minus side `b` with the normal pointing out of side `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interface {
    pub label: String,
    pub side_a: usize,
    pub side_b: usize,
    pub curve: Curve,
}

/// One summand of the trial function: `factor(x) · net(x)` on the listed
/// subdomains, zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTerm {
    pub label: String,
    pub support: Vec<usize>,
    pub factor: Factor,
}

impl TrialTerm {
    pub fn supports(&self, sub: usize) -> bool {
        self.support.contains(&sub)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoMaterialParams {
    pub alpha: [f64; 2],
    pub c: [f64; 2],
    pub k: [[f64; 2]; 2],
    pub interface: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourMaterialParams {
    pub alpha: [f64; 4],
    pub c: [f64; 4],
    pub k: [[f64; 2]; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleParams {
    /// Coefficient inside and outside the unit disk.
    pub alpha: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionDiffusionParams {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    SingularLaplace,
    TwoMaterial(TwoMaterialParams),
    FourMaterial(FourMaterialParams),
    Circle(CircleParams),
    ReactionDiffusion(ReactionDiffusionParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub name: String,
    pub test: Option<String>,
    pub kind: Kind,
    pub domain: Rect,
    pub beta: f64,
    pub subdomains: Vec<Subdomain>,
    pub interfaces: Vec<Interface>,
    pub terms: Vec<TrialTerm>,
    /// Non-homogeneous Dirichlet data that must be lifted by a boundary network.
    pub lifted: bool,
}

/// A catalog entry as printed by `problems list`.
#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub tests: Vec<(&'static str, Value)>,
    pub default_params: Value,
    pub description: &'static str,
}

pub const PROBLEM_NAMES: [&str; 6] = [
    "singular_laplace",
    "two_material",
    "two_material_highfreq",
    "four_material",
    "circle_inclusion",
    "reaction_diffusion",
];

fn two_material_test(label: &str) -> Option<TwoMaterialParams> {
    let base = |a1: f64, a2: f64| TwoMaterialParams {
        alpha: [a1, a2],
        c: [1.0, 1.0],
        k: [[1.0, 2.0], [4.0, 2.0]],
        interface: 2.0 / 3.0,
    };
    Some(match label {
        "1.1" | "2.2" => base(4.0, 1.0),
        "1.2" => base(4.0, 2.0),
        "2.1" => base(4e-4, 1.0),
        "2.3" => base(4000.0, 1.0),
        _ => return None,
    })
}

fn highfreq_default() -> TwoMaterialParams {
    TwoMaterialParams {
        alpha: [10.0, 2.0],
        c: [1.0, 1.0],
        k: [[1.0, 2.0], [10.0, 2.0]],
        interface: 2.0 / 9.0,
    }
}

fn four_material_test(label: &str) -> Option<FourMaterialParams> {
    Some(match label {
        "4.1" => FourMaterialParams {
            alpha: [4.0, 1.0, 1.0, 2.0],
            c: [1.0, 4.0, 4.0, 2.0],
            k: [[1.0, 1.0]; 4],
        },
        "4.2" => FourMaterialParams {
            alpha: [4.0, 1.0, 1.0, 10.0],
            c: [2.0, 5.0, 2.0, 4.0],
            k: [[3.0, 1.0], [1.0, 2.0], [1.0, 4.0], [2.0, 2.0]],
        },
        _ => return None,
    })
}

/// Every catalog entry with its default parameters and test labels.
pub fn catalog_entries() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "singular_laplace",
            tests: vec![],
            default_params: Value::Object(Default::default()),
            description: "-Δu = f on (0,1)^2 with line singularities of f along x1 = 1/2 and x2 = 1/2",
        },
        CatalogEntry {
            name: "two_material",
            tests: ["1.1", "1.2", "2.1", "2.2", "2.3"]
                .into_iter()
                .map(|t| (t, js(&two_material_test(t).unwrap())))
                .collect(),
            default_params: js(&two_material_test("1.1").unwrap()),
            description: "two materials split at x1 = interface, sine-product exact solution",
        },
        CatalogEntry {
            name: "two_material_highfreq",
            tests: vec![("3.1", js(&highfreq_default()))],
            default_params: js(&highfreq_default()),
            description: "two materials split at x1 = 2/9, high-frequency solution on the right",
        },
        CatalogEntry {
            name: "four_material",
            tests: ["4.1", "4.2"]
                .into_iter()
                .map(|t| (t, js(&four_material_test(t).unwrap())))
                .collect(),
            default_params: js(&four_material_test("4.1").unwrap()),
            description: "four quadrant materials on (-1,1)^2",
        },
        CatalogEntry {
            name: "circle_inclusion",
            tests: vec![("circle", js(&CircleParams { alpha: [1.0, 4.0] }))],
            default_params: js(&CircleParams { alpha: [1.0, 4.0] }),
            description: "unit-disk inclusion in (-2,2)^2 with non-homogeneous Dirichlet data",
        },
        CatalogEntry {
            name: "reaction_diffusion",
            tests: vec![],
            default_params: js(&ReactionDiffusionParams {
                alpha: 1.0,
                beta: 1.0,
            }),
            description: "-αΔu + βu = f on (0,1)^2 with u = sin(πx1) sin(πx2)",
        },
    ]
}

fn js<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("parameter structs serialize")
}

fn merge<T: Serialize + for<'de> Deserialize<'de>>(base: T, overrides: Option<&Value>) -> Result<T> {
    let Some(ov) = overrides else {
        return Ok(base);
    };
    let Value::Object(ov) = ov else {
        return Err(Error::InvalidProblem(
            "parameter overrides must be a JSON object".into(),
        ));
    };
    let mut v = serde_json::to_value(base)?;
    let obj = v.as_object_mut().expect("parameter structs are objects");
    for (k, x) in ov {
        obj.insert(k.clone(), x.clone());
    }
    serde_json::from_value(v).map_err(|e| Error::InvalidProblem(e.to_string()))
}

/// Builds a problem by name, optional test label and JSON parameter overrides.
pub fn catalog(name: &str, test: Option<&str>, overrides: Option<&Value>) -> Result<ProblemSpec> {
    let bad_test = |t: &str| Error::InvalidProblem(format!("problem `{name}` has no test `{t}`"));
    let spec = match name {
        "singular_laplace" => {
            if let Some(t) = test {
                return Err(bad_test(t));
            }
            if let Some(Value::Object(o)) = overrides {
                if !o.is_empty() {
                    return Err(Error::InvalidProblem(
                        "singular_laplace takes no parameters".into(),
                    ));
                }
            }
            singular_laplace()
        }
        "two_material" => {
            let t = test.unwrap_or("1.1");
            let p = two_material_test(t).ok_or_else(|| bad_test(t))?;
            two_material(name, Some(t), merge(p, overrides)?)?
        }
        "two_material_highfreq" => {
            let t = test.unwrap_or("3.1");
            if t != "3.1" {
                return Err(bad_test(t));
            }
            two_material(name, Some(t), merge(highfreq_default(), overrides)?)?
        }
        "four_material" => {
            let t = test.unwrap_or("4.1");
            let p = four_material_test(t).ok_or_else(|| bad_test(t))?;
            four_material(Some(t), merge(p, overrides)?)?
        }
        "circle_inclusion" => {
            let t = test.unwrap_or("circle");
            if t != "circle" {
                return Err(bad_test(t));
            }
            circle(merge(CircleParams { alpha: [1.0, 4.0] }, overrides)?)?
        }
        "reaction_diffusion" => {
            if let Some(t) = test {
                return Err(bad_test(t));
            }
            let p = merge(
                ReactionDiffusionParams {
                    alpha: 1.0,
                    beta: 1.0,
                },
                overrides,
            )?;
            reaction_diffusion(p)?
        }
        other => return Err(Error::UnknownProblem(other.to_string())),
    };
    spec.validate()?;
    Ok(spec)
}

/// Resolves a bare test label such as `1.2` or `circle` to its problem name.
pub fn problem_for_test(test: &str) -> Option<&'static str> {
    match test {
        "1.1" | "1.2" | "2.1" | "2.2" | "2.3" => Some("two_material"),
        "3.1" => Some("two_material_highfreq"),
        "4.1" | "4.2" => Some("four_material"),
        "circle" => Some("circle_inclusion"),
        _ => None,
    }
}

fn check_alpha(alpha: &[f64]) -> Result<()> {
    if alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidProblem(format!(
            "diffusion coefficients must be positive, got {alpha:?}"
        )));
    }
    Ok(())
}

fn unit_square_factor() -> Factor {
    Factor::product(
        Poly::from_roots(-1.0, &[0.0, 1.0]),
        Poly::from_roots(-1.0, &[0.0, 1.0]),
    )
}

fn singular_laplace() -> ProblemSpec {
    let dom = Rect {
        x: [0.0, 1.0],
        y: [0.0, 1.0],
    };
    ProblemSpec {
        name: "singular_laplace".into(),
        test: None,
        kind: Kind::SingularLaplace,
        domain: dom,
        beta: 0.0,
        subdomains: vec![Subdomain {
            label: "Ω".into(),
            alpha: 1.0,
            region: Region::Rect(dom),
        }],
        interfaces: vec![],
        terms: vec![TrialTerm {
            label: "x1(1-x1)x2(1-x2)".into(),
            support: vec![0],
            factor: unit_square_factor(),
        }],
        lifted: false,
    }
}

fn reaction_diffusion(p: ReactionDiffusionParams) -> Result<ProblemSpec> {
    check_alpha(&[p.alpha])?;
    if !(p.beta >= 0.0) {
        return Err(Error::InvalidProblem("beta must be nonnegative".into()));
    }
    let dom = Rect {
        x: [0.0, 1.0],
        y: [0.0, 1.0],
    };
    Ok(ProblemSpec {
        name: "reaction_diffusion".into(),
        test: None,
        beta: p.beta,
        domain: dom,
        subdomains: vec![Subdomain {
            label: "Ω".into(),
            alpha: p.alpha,
            region: Region::Rect(dom),
        }],
        kind: Kind::ReactionDiffusion(p),
        interfaces: vec![],
        terms: vec![TrialTerm {
            label: "x1(1-x1)x2(1-x2)".into(),
            support: vec![0],
            factor: unit_square_factor(),
        }],
        lifted: false,
    })
}

fn two_material(name: &str, test: Option<&str>, p: TwoMaterialParams) -> Result<ProblemSpec> {
    check_alpha(&p.alpha)?;
    let xi = p.interface;
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::InvalidProblem(format!(
            "interface position {xi} must lie in (0, 1)"
        )));
    }
    let y01 = Poly::from_roots(-1.0, &[0.0, 1.0]);
    Ok(ProblemSpec {
        name: name.into(),
        test: test.map(String::from),
        domain: Rect {
            x: [0.0, 1.0],
            y: [0.0, 1.0],
        },
        beta: 0.0,
        subdomains: vec![
            Subdomain {
                label: "Ω1".into(),
                alpha: p.alpha[0],
                region: Region::Rect(Rect {
                    x: [0.0, xi],
                    y: [0.0, 1.0],
                }),
            },
            Subdomain {
                label: "Ω2".into(),
                alpha: p.alpha[1],
                region: Region::Rect(Rect {
                    x: [xi, 1.0],
                    y: [0.0, 1.0],
                }),
            },
        ],
        interfaces: vec![Interface {
            label: "Γ".into(),
            side_a: 0,
            side_b: 1,
            curve: Curve::Segment {
                p0: [xi, 0.0],
                p1: [xi, 1.0],
                normal: [1.0, 0.0],
            },
        }],
        terms: vec![
            TrialTerm {
                label: "Ω1".into(),
                support: vec![0],
                factor: Factor::product(Poly::from_roots(-1.0, &[0.0, xi]), y01.clone()),
            },
            TrialTerm {
                label: "Ω2".into(),
                support: vec![1],
                factor: Factor::product(Poly::from_roots(-1.0, &[xi, 1.0]), y01.clone()),
            },
            TrialTerm {
                label: "Ω".into(),
                support: vec![0, 1],
                factor: unit_square_factor(),
            },
        ],
        kind: Kind::TwoMaterial(p),
        lifted: false,
    })
}

fn four_material(test: Option<&str>, p: FourMaterialParams) -> Result<ProblemSpec> {
    check_alpha(&p.alpha)?;
    let quad = |x: [f64; 2], y: [f64; 2]| Region::Rect(Rect { x, y });
    let (neg, pos) = ([-1.0, 0.0], [0.0, 1.0]);
    let regions = [quad(neg, neg), quad(pos, neg), quad(neg, pos), quad(pos, pos)];
    let subdomains = regions
        .iter()
        .enumerate()
        .map(|(i, &region)| Subdomain {
            label: format!("Ω{}", i + 1),
            alpha: p.alpha[i],
            region,
        })
        .collect();
    // factor vanishing on the boundary of [lo, hi] (sign chosen positive inside)
    let bubble = |lo: f64, hi: f64| Poly::from_roots(-1.0, &[lo, hi]);
    let term = |label: &str, support: Vec<usize>, fx: Poly, fy: Poly| TrialTerm {
        label: label.into(),
        support,
        factor: Factor::product(fx, fy),
    };
    let terms = vec![
        term("Ω1", vec![0], bubble(-1.0, 0.0), bubble(-1.0, 0.0)),
        term("Ω2", vec![1], bubble(0.0, 1.0), bubble(-1.0, 0.0)),
        term("Ω3", vec![2], bubble(-1.0, 0.0), bubble(0.0, 1.0)),
        term("Ω4", vec![3], bubble(0.0, 1.0), bubble(0.0, 1.0)),
        term("Ω5=Ω1∪Ω2", vec![0, 1], bubble(-1.0, 1.0), bubble(-1.0, 0.0)),
        term("Ω6=Ω1∪Ω3", vec![0, 2], bubble(-1.0, 0.0), bubble(-1.0, 1.0)),
        term("Ω7=Ω2∪Ω4", vec![1, 3], bubble(0.0, 1.0), bubble(-1.0, 1.0)),
        term("Ω8=Ω3∪Ω4", vec![2, 3], bubble(-1.0, 1.0), bubble(0.0, 1.0)),
        term("Ω", vec![0, 1, 2, 3], bubble(-1.0, 1.0), bubble(-1.0, 1.0)),
    ];
    let seg = |label: &str, a: usize, b: usize, p0: [f64; 2], p1: [f64; 2], normal: [f64; 2]| {
        Interface {
            label: label.into(),
            side_a: a,
            side_b: b,
            curve: Curve::Segment { p0, p1, normal },
        }
    };
    let interfaces = vec![
        seg("Ω1|Ω2", 0, 1, [0.0, -1.0], [0.0, 0.0], [1.0, 0.0]),
        seg("Ω3|Ω4", 2, 3, [0.0, 0.0], [0.0, 1.0], [1.0, 0.0]),
        seg("Ω1|Ω3", 0, 2, [-1.0, 0.0], [0.0, 0.0], [0.0, 1.0]),
        seg("Ω2|Ω4", 1, 3, [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]),
    ];
    Ok(ProblemSpec {
        name: "four_material".into(),
        test: test.map(String::from),
        domain: Rect {
            x: [-1.0, 1.0],
            y: [-1.0, 1.0],
        },
        beta: 0.0,
        subdomains,
        interfaces,
        terms,
        kind: Kind::FourMaterial(p),
        lifted: false,
    })
}

fn circle(p: CircleParams) -> Result<ProblemSpec> {
    check_alpha(&p.alpha)?;
    let dom = Rect {
        x: [-2.0, 2.0],
        y: [-2.0, 2.0],
    };
    let w = Factor::product(
        Poly::from_roots(1.0, &[-2.0, 2.0]),
        Poly::from_roots(1.0, &[-2.0, 2.0]),
    );
    let gamma = Factor {
        terms: vec![
            (Poly(vec![-1.0, 0.0, 1.0]), Poly::constant(1.0)),
            (Poly::constant(1.0), Poly(vec![0.0, 0.0, 1.0])),
        ],
    };
    Ok(ProblemSpec {
        name: "circle_inclusion".into(),
        test: Some("circle".into()),
        domain: dom,
        beta: 0.0,
        subdomains: vec![
            Subdomain {
                label: "Ω1".into(),
                alpha: p.alpha[0],
                region: Region::UnitDisk,
            },
            Subdomain {
                label: "Ω2".into(),
                alpha: p.alpha[1],
                region: Region::OutsideUnitDisk,
            },
        ],
        interfaces: vec![Interface {
            label: "Γ".into(),
            side_a: 0,
            side_b: 1,
            curve: Curve::UnitCircle,
        }],
        terms: vec![
            TrialTerm {
                label: "w·Ψ".into(),
                support: vec![0, 1],
                factor: w,
            },
            TrialTerm {
                label: "γ·Ψ1".into(),
                support: vec![0],
                factor: gamma,
            },
        ],
        kind: Kind::Circle(p),
        lifted: true,
    })
}

fn sine_product(c: f64, k: [f64; 2], x: [f64; 2]) -> Jet {
    let (a, b) = (k[0] * PI, k[1] * PI);
    let (sa, ca) = (a * x[0]).sin_cos();
    let (sb, cb) = (b * x[1]).sin_cos();
    Jet {
        v: c * sa * sb,
        gx: c * a * ca * sb,
        gy: c * b * sa * cb,
        lap: -(a * a + b * b) * c * sa * sb,
    }
}

/// `sin(κ(|x|² - 1))` and its derivatives.
fn radial_sine(kappa: f64, x: [f64; 2]) -> Jet {
    let s = x[0] * x[0] + x[1] * x[1];
    let (sn, cs) = (kappa * (s - 1.0)).sin_cos();
    Jet {
        v: sn,
        gx: 2.0 * kappa * cs * x[0],
        gy: 2.0 * kappa * cs * x[1],
        lap: 4.0 * kappa * cs - 4.0 * kappa * kappa * s * sn,
    }
}

const CIRCLE_KAPPA: [f64; 2] = [PI, PI / 4.0];

impl ProblemSpec {
    pub fn n_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn alpha(&self, sub: usize) -> f64 {
        self.subdomains[sub].alpha
    }

    pub fn has_interfaces(&self) -> bool {
        !self.interfaces.is_empty()
    }

    pub fn has_exact(&self) -> bool {
        true
    }

    /// Subdomain owning a point; points on interfaces belong to the
    /// lower-numbered side, following the half-open conventions of the tests.
    pub fn subdomain_at(&self, x: [f64; 2]) -> usize {
        match &self.kind {
            Kind::SingularLaplace | Kind::ReactionDiffusion(_) => 0,
            Kind::TwoMaterial(p) => usize::from(x[0] > p.interface),
            Kind::FourMaterial(_) => usize::from(x[0] > 0.0) + 2 * usize::from(x[1] > 0.0),
            Kind::Circle(_) => usize::from(x[0] * x[0] + x[1] * x[1] > 1.0),
        }
    }

    /// Exact solution on the branch of subdomain `sub`, extended analytically
    /// beyond the subdomain where needed (signed difference rules).
    pub fn exact(&self, sub: usize, x: [f64; 2]) -> Jet {
        match &self.kind {
            Kind::SingularLaplace => singular::exact(x),
            Kind::ReactionDiffusion(_) => sine_product(1.0, [1.0, 1.0], x),
            Kind::TwoMaterial(p) => sine_product(p.c[sub], p.k[sub], x),
            Kind::FourMaterial(p) => sine_product(p.c[sub], p.k[sub], x),
            Kind::Circle(_) => radial_sine(CIRCLE_KAPPA[sub], x),
        }
    }

    pub fn exact_value(&self, x: [f64; 2]) -> f64 {
        self.exact(self.subdomain_at(x), x).v
    }

    /// Source term on the branch of subdomain `sub`.
    pub fn source(&self, sub: usize, x: [f64; 2]) -> f64 {
        match &self.kind {
            Kind::SingularLaplace => singular::source(x),
            _ => {
                let j = self.exact(sub, x);
                -self.alpha(sub) * j.lap + self.beta * j.v
            }
        }
    }

    /// Outward normal (from side `a`) of interface `iface` at `x`.
    pub fn normal(&self, iface: usize, x: [f64; 2]) -> [f64; 2] {
        match self.interfaces[iface].curve {
            Curve::Segment { normal, .. } => normal,
            Curve::UnitCircle => {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                [x[0] / r, x[1] / r]
            }
        }
    }

    /// Prescribed flux jump `g = α_a ∂_n u_a − α_b ∂_n u_b` on interface `iface`.
    pub fn flux_jump(&self, iface: usize, x: [f64; 2]) -> f64 {
        let it = &self.interfaces[iface];
        let n = self.normal(iface, x);
        let flux = |s: usize| {
            let j = self.exact(s, x);
            self.alpha(s) * (n[0] * j.gx + n[1] * j.gy)
        };
        flux(it.side_a) - flux(it.side_b)
    }

    /// Dirichlet data on the outer boundary.
    pub fn dirichlet(&self, x: [f64; 2]) -> f64 {
        match &self.kind {
            Kind::Circle(_) => {
                let on_x = (x[1].abs() - 2.0).abs() < 1e-12;
                let s = if on_x { x[0] } else { x[1] };
                (PI / 4.0 * (s * s + 3.0)).sin()
            }
            _ => 0.0,
        }
    }

    /// Random interior points of `sub` (deterministic for a given seed).
    pub fn sample_points(&self, sub: usize, n: usize, seed: u64) -> Vec<[f64; 2]> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = self.domain;
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let (rx, ry) = match self.subdomains[sub].region {
                Region::Rect(r) => (r.x, r.y),
                _ => (d.x, d.y),
            };
            let p = [
                rng.random_range(rx[0]..rx[1]),
                rng.random_range(ry[0]..ry[1]),
            ];
            let inside = match self.subdomains[sub].region {
                Region::Rect(_) => true,
                Region::UnitDisk => p[0] * p[0] + p[1] * p[1] < 1.0,
                Region::OutsideUnitDisk => p[0] * p[0] + p[1] * p[1] > 1.0,
            };
            if inside {
                out.push(p);
            }
        }
        out
    }

    /// Points on interface `iface`, evenly spread.
    pub fn interface_points(&self, iface: usize, n: usize) -> Vec<[f64; 2]> {
        (0..n)
            .map(|i| {
                let t = (i as f64 + 0.5) / n as f64;
                match self.interfaces[iface].curve {
                    Curve::Segment { p0, p1, .. } => {
                        [p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])]
                    }
                    Curve::UnitCircle => {
                        let th = 2.0 * PI * t;
                        [th.cos(), th.sin()]
                    }
                }
            })
            .collect()
    }

    /// Points on the outer boundary, evenly spread over the four edges.
    pub fn boundary_points(&self, n_per_edge: usize) -> Vec<[f64; 2]> {
        let d = self.domain;
        let mut out = Vec::with_capacity(4 * n_per_edge);
        for i in 0..n_per_edge {
            let t = i as f64 / n_per_edge as f64;
            let x = d.x[0] + t * (d.x[1] - d.x[0]);
            let y = d.y[0] + t * (d.y[1] - d.y[0]);
            out.push([x, d.y[0]]);
            out.push([d.x[1], y]);
            out.push([d.x[1] + d.x[0] - x, d.y[1]]);
            out.push([d.x[0], d.y[1] + d.y[0] - y]);
        }
        out
    }

    /// Checks that the exact solution is continuous across every interface
    /// and matches the Dirichlet data, at sampled points.
    pub fn validate(&self) -> Result<()> {
        let scale = self
            .sample_points(0, 64, 7)
            .iter()
            .map(|&x| self.exact(0, x).v.abs())
            .fold(1.0f64, f64::max);
        for (i, it) in self.interfaces.iter().enumerate() {
            for x in self.interface_points(i, 1000) {
                let jump = self.exact(it.side_a, x).v - self.exact(it.side_b, x).v;
                if jump.abs() > 1e-12 * scale {
                    return Err(Error::InvalidProblem(format!(
                        "exact solution jumps by {jump:e} across {} at {x:?}",
                        it.label
                    )));
                }
            }
        }
        for x in self.boundary_points(64) {
            let sub = self.subdomain_at(x);
            let miss = self.exact(sub, x).v - self.dirichlet(x);
            if miss.abs() > 1e-12 * scale {
                return Err(Error::InvalidProblem(format!(
                    "exact solution misses the boundary data by {miss:e} at {x:?}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flux_is_continuous_for_test_1_1() {
        let p = catalog("two_material", Some("1.1"), None).unwrap();
        for x in p.interface_points(0, 100) {
            assert!(p.flux_jump(0, x).abs() < 1e-12);
        }
        let p = catalog("two_material", Some("1.2"), None).unwrap();
        let x = [2.0 / 3.0, 0.3];
        let expected = 4.0 * PI * (2.0 * PI / 3.0).cos() * (2.0 * PI * 0.3).sin()
            - 2.0 * 4.0 * PI * (8.0 * PI / 3.0).cos() * (2.0 * PI * 0.3).sin();
        assert!((p.flux_jump(0, x) - expected).abs() < 1e-12);
    }

    #[test]
    fn circle_has_no_jumps() {
        let p = catalog("circle_inclusion", None, None).unwrap();
        for x in p.interface_points(0, 100) {
            assert!(p.flux_jump(0, x).abs() < 1e-12);
            assert!((p.exact(0, x).v - p.exact(1, x).v).abs() < 1e-15);
        }
    }

    #[test]
    fn two_material_trial_at_ones() {
        let p = catalog("two_material", Some("1.1"), None).unwrap();
        let x = [1.0 / 3.0, 0.5];
        let sub = p.subdomain_at(x);
        let v: f64 = p
            .terms
            .iter()
            .filter(|t| t.supports(sub))
            .map(|t| t.factor.value(x))
            .sum();
        // x1(2/3 - x1) x2(1 - x2) + x1(1 - x1) x2(1 - x2)
        let hand = (1.0 / 3.0) * (1.0 / 3.0) * 0.25 + (1.0 / 3.0) * (2.0 / 3.0) * 0.25;
        assert!((v - hand).abs() < 1e-15);
        assert!((v - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(matches!(
            catalog("nope", None, None),
            Err(Error::UnknownProblem(_))
        ));
        let ov = serde_json::json!({"alpha": [0.0, 1.0]});
        assert!(catalog("two_material", Some("1.1"), Some(&ov)).is_err());
        let ov = serde_json::json!({"c": [1.0, 2.0]});
        assert!(catalog("two_material", Some("1.1"), Some(&ov)).is_err());
        assert!(catalog("two_material", Some("9.9"), None).is_err());
    }

    #[test]
    fn four_material_terms_vanish_on_outer_boundary() {
        let p = catalog("four_material", Some("4.2"), None).unwrap();
        for x in p.boundary_points(50) {
            let sub = p.subdomain_at(x);
            for t in p.terms.iter().filter(|t| t.supports(sub)) {
                assert!(t.factor.value(x).abs() < 1e-15);
            }
        }
    }
}
