//! A fully connected sin network evaluated together with its spatial jets
//! (value, gradient, Laplacian) and differentiated in reverse mode.
//!
//! Rows of every matrix are points, columns are neurons. A layer stores its
//! weight row-major as `n_out × n_in` followed by its `n_out` biases.

use ndarray::{concatenate, s, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::par;

/// Value, per-coordinate gradient and Laplacian of a vector field at a batch of points.
#[derive(Debug, Clone, PartialEq)]
pub struct Jets {
    pub v: Array2<f64>,
    pub g: Vec<Array2<f64>>,
    pub l: Array2<f64>,
}

impl Jets {
    pub fn zeros(m: usize, n: usize, d: usize) -> Self {
        Jets {
            v: Array2::zeros((m, n)),
            g: vec![Array2::zeros((m, n)); d],
            l: Array2::zeros((m, n)),
        }
    }

    pub fn rows(&self) -> usize {
        self.v.nrows()
    }

    fn slice_rows(&self, r: std::ops::Range<usize>) -> Jets {
        Jets {
            v: self.v.slice(s![r.clone(), ..]).to_owned(),
            g: self.g.iter().map(|g| g.slice(s![r.clone(), ..]).to_owned()).collect(),
            l: self.l.slice(s![r, ..]).to_owned(),
        }
    }

    fn stack(parts: &[Jets]) -> Jets {
        let cat = |f: &dyn Fn(&Jets) -> ArrayView2<f64>| {
            let views: Vec<_> = parts.iter().map(f).collect();
            concatenate(Axis(0), &views).expect("chunks share a column count")
        };
        let d = parts[0].g.len();
        Jets {
            v: cat(&|j| j.v.view()),
            g: (0..d).map(|i| cat(&|j: &Jets| j.g[i].view())).collect(),
            l: cat(&|j| j.l.view()),
        }
    }

    fn add_assign(&mut self, o: &Jets) {
        self.v += &o.v;
        for (a, b) in self.g.iter_mut().zip(&o.g) {
            *a += b;
        }
        self.l += &o.l;
    }
}

/// Shape of one network: `dims = [input, hidden…, output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub dims: Vec<usize>,
    pub skip: Option<usize>,
    /// Position of the first parameter in the global parameter vector.
    pub offset: usize,
}

struct Activation {
    s: Array2<f64>,
    c: Array2<f64>,
    gz: Vec<Array2<f64>>,
    lz: Array2<f64>,
}

struct Tape {
    /// `hs[k]` are the jets of hidden layer `k` (`hs[0]` is the input).
    hs: Vec<Jets>,
    acts: Vec<Activation>,
}

impl Mlp {
    pub fn new(dims: Vec<usize>, skip: Option<usize>, offset: usize) -> Self {
        Mlp { dims, skip, offset }
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    fn n_hidden(&self) -> usize {
        self.dims.len() - 2
    }

    pub fn n_params(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Absolute index ranges `(weights, biases)` of linear layer `l`.
    pub fn layer_ranges(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let mut at = self.offset;
        for w in self.dims.windows(2).take(l) {
            at += w[0] * w[1] + w[1];
        }
        let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
        (at..at + n_in * n_out, at + n_in * n_out..at + n_in * n_out + n_out)
    }

    fn layer<'a>(&self, params: &'a [f64], l: usize) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
        let (wr, br) = self.layer_ranges(l);
        let w = ArrayView2::from_shape((self.dims[l + 1], self.dims[l]), &params[wr])
            .expect("layer ranges match dims");
        (w, ArrayView1::from(&params[br]))
    }

    /// Hidden layer `k` (1-based) receives a residual connection from `k - skip`.
    fn skip_source(&self, k: usize) -> Option<usize> {
        let s = self.skip?;
        (k > s && (k - 1).is_multiple_of(s)).then(|| k - s)
    }

    fn input_jets(&self, x: ArrayView2<f64>) -> Jets {
        let (m, d) = x.dim();
        let mut g = vec![Array2::zeros((m, d)); d];
        for (i, gi) in g.iter_mut().enumerate() {
            gi.column_mut(i).fill(1.0);
        }
        Jets {
            v: x.to_owned(),
            g,
            l: Array2::zeros((m, d)),
        }
    }

    fn forward_chunk(&self, params: &[f64], x: ArrayView2<f64>, keep: bool) -> Result<(Jets, Option<Tape>)> {
        let d = self.input_dim();
        let mut hs = vec![self.input_jets(x)];
        let mut acts = Vec::new();
        for k in 1..=self.n_hidden() {
            let (w, b) = self.layer(params, k - 1);
            let prev = hs.last().unwrap();
            let z = prev.v.dot(&w.t()) + b;
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: k - 1 });
            }
            let gz: Vec<Array2<f64>> = prev.g.iter().map(|g| g.dot(&w.t())).collect();
            let lz = prev.l.dot(&w.t());
            let sn = z.mapv(f64::sin);
            let cs = z.mapv(f64::cos);
            let mut g: Vec<Array2<f64>> = gz.iter().map(|gz| &cs * gz).collect();
            let mut sq = Array2::<f64>::zeros(z.dim());
            for gzi in &gz {
                Zip::from(&mut sq).and(gzi).for_each(|q, &a| *q += a * a);
            }
            let mut l = &cs * &lz - &sn * &sq;
            let mut v = sn.clone();
            if let Some(src) = self.skip_source(k) {
                let h = &hs[src];
                v += &h.v;
                for (gi, hg) in g.iter_mut().zip(&h.g) {
                    *gi += hg;
                }
                l += &h.l;
            }
            hs.push(Jets { v, g, l });
            if keep {
                acts.push(Activation { s: sn, c: cs, gz, lz });
            }
        }
        let last = self.n_hidden();
        let (w, b) = self.layer(params, last);
        let h = hs.last().unwrap();
        let out = Jets {
            v: h.v.dot(&w.t()) + b,
            g: h.g.iter().map(|g| g.dot(&w.t())).collect(),
            l: h.l.dot(&w.t()),
        };
        if out.v.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { layer: last });
        }
        debug_assert_eq!(out.g.len(), d);
        Ok((out, keep.then_some(Tape { hs, acts })))
    }

    fn backward_chunk(&self, params: &[f64], tape: &Tape, adj: &Jets) -> Vec<f64> {
        let mut grad = vec![0.0; self.n_params()];
        let base = self.offset;
        let nh = self.n_hidden();
        let mut adjs: Vec<Option<Jets>> = vec![None; nh + 1];

        let linear = |l: usize, a: &Jets, h: &Jets, grad: &mut [f64]| -> Jets {
            let (w, _) = self.layer(params, l);
            let (wr, br) = self.layer_ranges(l);
            let mut dw = a.v.t().dot(&h.v);
            for (ag, hg) in a.g.iter().zip(&h.g) {
                dw += &ag.t().dot(hg);
            }
            dw += &a.l.t().dot(&h.l);
            for (dst, src) in grad[wr.start - base..wr.end - base].iter_mut().zip(dw.iter()) {
                *dst += src;
            }
            let db = a.v.sum_axis(Axis(0));
            for (dst, src) in grad[br.start - base..br.end - base].iter_mut().zip(db.iter()) {
                *dst += src;
            }
            Jets {
                v: a.v.dot(&w),
                g: a.g.iter().map(|g| g.dot(&w)).collect(),
                l: a.l.dot(&w),
            }
        };

        adjs[nh] = Some(linear(nh, adj, &tape.hs[nh], &mut grad));
        for k in (1..=nh).rev() {
            let a = adjs[k].take().expect("adjoint set by upper layer");
            if let Some(src) = self.skip_source(k) {
                match &mut adjs[src] {
                    Some(t) => t.add_assign(&a),
                    slot => *slot = Some(a.clone()),
                }
            }
            let act = &tape.acts[k - 1];
            // sin layer: v = S, g_i = C gz_i, l = C lz - S |gz|^2
            let mut az = &a.v * &act.c - &a.l * &(&act.s * &act.lz);
            let mut sq = Array2::<f64>::zeros(az.dim());
            for gzi in &act.gz {
                Zip::from(&mut sq).and(gzi).for_each(|q, &x| *q += x * x);
            }
            az -= &(&a.l * &(&act.c * &sq));
            let mut agz = Vec::with_capacity(act.gz.len());
            for (ag, gzi) in a.g.iter().zip(&act.gz) {
                az -= &(ag * &(&act.s * gzi));
                agz.push(ag * &act.c - &(&a.l * &(&act.s * gzi)) * 2.0);
            }
            let alz = &a.l * &act.c;
            let az_jets = Jets { v: az, g: agz, l: alz };
            let below = linear(k - 1, &az_jets, &tape.hs[k - 1], &mut grad);
            if k > 1 {
                match &mut adjs[k - 1] {
                    Some(t) => t.add_assign(&below),
                    slot => *slot = Some(below),
                }
            }
        }
        grad
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} input columns, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Output jets at every row of `x`.
    pub fn jets(&self, params: &[f64], x: ArrayView2<f64>) -> Result<Jets> {
        self.check_input(&x)?;
        let m = x.nrows();
        if m == 0 {
            return Ok(Jets::zeros(0, self.output_dim(), self.input_dim()));
        }
        let parts = par::map(&par::chunks(m), |r| {
            self.forward_chunk(params, x.slice(s![r.clone(), ..]), false)
                .map(|(j, _)| j)
        });
        let parts: Vec<Jets> = parts.into_iter().collect::<Result<_>>()?;
        Ok(Jets::stack(&parts))
    }

    /// Output values only.
    pub fn values(&self, params: &[f64], x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let nh = self.n_hidden();
        let parts = par::map(&par::chunks(x.nrows()), |r| -> Result<Array2<f64>> {
            let mut hs: Vec<Array2<f64>> = vec![x.slice(s![r.clone(), ..]).to_owned()];
            for k in 1..=nh {
                let (w, b) = self.layer(params, k - 1);
                let z = hs.last().unwrap().dot(&w.t()) + b;
                if z.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { layer: k - 1 });
                }
                let mut h = z.mapv(f64::sin);
                if let Some(src) = self.skip_source(k) {
                    h += &hs[src];
                }
                hs.push(h);
            }
            let (w, b) = self.layer(params, nh);
            Ok(hs.last().unwrap().dot(&w.t()) + b)
        });
        let parts: Vec<Array2<f64>> = parts.into_iter().collect::<Result<_>>()?;
        if parts.is_empty() {
            return Ok(Array2::zeros((0, self.output_dim())));
        }
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        Ok(concatenate(Axis(0), &views).expect("chunks share a column count"))
    }

    /// Adds `∂L/∂θ` to `grad` (indexed globally) given the adjoint of the
    /// output jets at the rows of `x`. The forward pass is recomputed chunk by
    /// chunk; chunk gradients are summed in chunk order.
    pub fn backprop(&self, params: &[f64], x: ArrayView2<f64>, adj: &Jets, grad: &mut [f64]) -> Result<()> {
        self.check_input(&x)?;
        let m = x.nrows();
        if adj.rows() != m || adj.v.ncols() != self.output_dim() || adj.g.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "adjoint is {}×{} with {} gradient channels, expected {m}×{} with {}",
                adj.rows(),
                adj.v.ncols(),
                adj.g.len(),
                self.output_dim(),
                self.input_dim()
            )));
        }
        let parts = par::map(&par::chunks(m), |r| -> Result<Vec<f64>> {
            let (_, tape) = self.forward_chunk(params, x.slice(s![r.clone(), ..]), true)?;
            Ok(self.backward_chunk(params, &tape.unwrap(), &adj.slice_rows(r.clone())))
        });
        let dst = &mut grad[self.offset..self.offset + self.n_params()];
        for p in parts {
            for (d, s) in dst.iter_mut().zip(p?) {
                *d += s;
            }
        }
        Ok(())
    }
}
