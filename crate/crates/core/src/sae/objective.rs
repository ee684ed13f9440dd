use std::borrow::Cow;
use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView2, Axis, CowArray, Ix2};

use super::{class_means, l2_reg, penalty_matrix, sigmoid, LayerParams, LossWeights};
use crate::error::{CdneError, Result};

/// A pairwise weight matrix prepared for the Laplacian form of
/// `(1 / 2n) sum_ij W_ij ||H_i - H_j||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pairwise {
    /// `W + W^T`
    sym: Array2<f64>,
    /// Row sums of `sym`.
    degree: Array1<f64>,
}

impl Pairwise {
    pub fn new(weights: ArrayView2<f64>) -> Result<Self> {
        let (r, c) = weights.dim();
        if r != c {
            return Err(CdneError::shape("Pairwise::new", (r, r), (r, c)));
        }
        let sym = &weights + &weights.t();
        Ok(Self::from_sym(sym))
    }

    fn from_sym(sym: Array2<f64>) -> Self {
        let degree = sym.sum_axis(Axis(1));
        Self { sym, degree }
    }

    pub fn n(&self) -> usize {
        self.degree.len()
    }

    fn check(&self, h: ArrayView2<f64>) -> Result<()> {
        if h.nrows() != self.n() {
            return Err(CdneError::shape("pairwise loss", self.n(), h.nrows()));
        }
        Ok(())
    }

    pub fn loss(&self, h: ArrayView2<f64>) -> Result<f64> {
        self.check(h)?;
        Ok(self.loss_and_gradient(h).0)
    }

    /// Value and gradient with respect to `h`:
    /// `dL/dH_i = (deg_i H_i - (S H)_i) / n`.
    pub(crate) fn loss_and_gradient(&self, h: ArrayView2<f64>) -> (f64, Array2<f64>) {
        let n = self.n().max(1) as f64;
        let sh = self.sym.dot(&h);
        let mut grad = h.to_owned();
        for (mut row, d) in grad.axis_iter_mut(Axis(0)).zip(self.degree.iter()) {
            row *= *d;
        }
        let quad: f64 = grad.iter().zip(h.iter()).map(|(g, x)| g * x).sum();
        let cross: f64 = sh.iter().zip(h.iter()).map(|(s, x)| s * x).sum();
        grad -= &sh;
        grad /= n;
        ((quad - cross) / (2.0 * n), grad)
    }

    fn restrict(&self, rows: &[usize]) -> Self {
        let sym = self.sym.select(Axis(0), rows).select(Axis(1), rows);
        Self::from_sym(sym)
    }
}

/// Frozen source-side statistics that a target layer is aligned against.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    source_mean: Array1<f64>,
    source_class_means: Array2<f64>,
    /// `n_t x C` fuzzy label matrix.
    fuzzy: Array2<f64>,
}

impl Alignment {
    /// `h_s` is the source representation at the matching depth, `y_s` the
    /// source label matrix and `fuzzy` the target's fuzzy label matrix.
    pub fn new(h_s: ArrayView2<f64>, y_s: ArrayView2<f64>, fuzzy: ArrayView2<f64>) -> Result<Self> {
        if h_s.nrows() == 0 {
            return Err(CdneError::invalid("empty source representation"));
        }
        if fuzzy.ncols() != y_s.ncols() {
            return Err(CdneError::shape("Alignment::new", y_s.ncols(), fuzzy.ncols()));
        }
        Ok(Self {
            source_mean: h_s.mean_axis(Axis(0)).unwrap(),
            source_class_means: class_means(h_s, y_s)?,
            fuzzy: fuzzy.to_owned(),
        })
    }

    pub fn dim(&self) -> usize {
        self.source_mean.len()
    }

    pub fn source_class_means(&self) -> &Array2<f64> {
        &self.source_class_means
    }

    fn marginal(&self, h: ArrayView2<f64>) -> (f64, Array2<f64>) {
        let n = h.nrows() as f64;
        let diff = h.mean_axis(Axis(0)).unwrap() - &self.source_mean;
        let value = 0.5 * diff.dot(&diff);
        let row = diff / n;
        let grad = row.broadcast(h.raw_dim()).unwrap().to_owned();
        (value, grad)
    }

    fn conditional(&self, h: ArrayView2<f64>) -> (f64, Array2<f64>) {
        let classes = self.fuzzy.ncols();
        let mass = self.fuzzy.sum_axis(Axis(0));
        let weighted = self.fuzzy.t().dot(&h);
        let mut diffs = Array2::zeros((classes, h.ncols()));
        let mut scale = Array1::zeros(classes);
        let mut value = 0.0;
        for c in 0..classes {
            if mass[c] <= 0.0 {
                continue;
            }
            let diff = &weighted.row(c) / mass[c] - self.source_class_means.row(c);
            value += 0.5 * diff.dot(&diff);
            diffs.row_mut(c).assign(&diff);
            scale[c] = 1.0 / mass[c];
        }
        let grad = (&self.fuzzy * &scale).dot(&diffs);
        (value, grad)
    }

    fn restrict(&self, rows: &[usize]) -> Self {
        Self {
            fuzzy: self.fuzzy.select(Axis(0), rows),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub enum Side<'a> {
    /// Source layers carry the shared-label pairwise constraint.
    Source { labels: Cow<'a, Pairwise> },
    /// Target layers carry the marginal and class-conditional MMD terms.
    Target { alignment: Cow<'a, Alignment> },
}

/// Every term of one layer's loss. Terms whose weight is zero are not
/// evaluated and read 0.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub recon: f64,
    pub conn: f64,
    pub label: f64,
    pub mmd_m: f64,
    pub mmd_c: f64,
    pub l2: f64,
}

impl LossBreakdown {
    pub const TSV_HEADER: &'static str = "iter\ttotal\trecon\tconn\tlabel\tmmd_m\tmmd_c\tl2";

    pub fn trajectory_tsv(trajectory: &[LossBreakdown]) -> String {
        let mut out = String::new();
        out.push_str(Self::TSV_HEADER);
        out.push('\n');
        for (i, l) in trajectory.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i}\t{:.16e}\t{:.16e}\t{:.16e}\t{:.16e}\t{:.16e}\t{:.16e}\t{:.16e}",
                l.total, l.recon, l.conn, l.label, l.mmd_m, l.mmd_c, l.l2
            );
        }
        out
    }

    /// Parses the output of [`LossBreakdown::trajectory_tsv`].
    pub fn parse_trajectory_tsv(text: &str) -> Result<Vec<LossBreakdown>> {
        let mut lines = text.lines();
        if lines.next() != Some(Self::TSV_HEADER) {
            return Err(CdneError::invalid("trajectory dump lacks its header"));
        }
        lines
            .enumerate()
            .map(|(i, line)| {
                let bad = || CdneError::invalid(format!("trajectory row {i}: {line:?}"));
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != 8 || fields[0].parse::<usize>().ok() != Some(i) {
                    return Err(bad());
                }
                let v: Vec<f64> = fields[1..]
                    .iter()
                    .map(|f| f.parse::<f64>().map_err(|_| bad()))
                    .collect::<Result<_>>()?;
                Ok(LossBreakdown {
                    total: v[0],
                    recon: v[1],
                    conn: v[2],
                    label: v[3],
                    mmd_m: v[4],
                    mmd_c: v[5],
                    l2: v[6],
                })
            })
            .collect()
    }
}

/// The full loss of one source or target layer over a fixed input.
#[derive(Debug, Clone)]
pub struct LayerObjective<'a> {
    input: CowArray<'a, f64, Ix2>,
    penalty: Array2<f64>,
    proximity: Cow<'a, Pairwise>,
    side: Side<'a>,
    weights: LossWeights,
}

impl<'a> LayerObjective<'a> {
    /// Reconstruction + connectivity + shared-label constraint + L2.
    pub fn source(
        input: ArrayView2<'a, f64>,
        layer_index: usize,
        proximity: &'a Pairwise,
        labels: &'a Pairwise,
        weights: LossWeights,
    ) -> Result<Self> {
        if labels.n() != input.nrows() {
            return Err(CdneError::shape("source objective labels", input.nrows(), labels.n()));
        }
        Self::build(
            input,
            layer_index,
            proximity,
            Side::Source { labels: Cow::Borrowed(labels) },
            weights,
        )
    }

    /// Reconstruction + connectivity + marginal MMD + conditional MMD + L2.
    pub fn target(
        input: ArrayView2<'a, f64>,
        layer_index: usize,
        proximity: &'a Pairwise,
        alignment: &'a Alignment,
        weights: LossWeights,
    ) -> Result<Self> {
        if alignment.fuzzy.nrows() != input.nrows() {
            return Err(CdneError::shape(
                "target objective fuzzy labels",
                input.nrows(),
                alignment.fuzzy.nrows(),
            ));
        }
        Self::build(
            input,
            layer_index,
            proximity,
            Side::Target { alignment: Cow::Borrowed(alignment) },
            weights,
        )
    }

    fn build(
        input: ArrayView2<'a, f64>,
        layer_index: usize,
        proximity: &'a Pairwise,
        side: Side<'a>,
        weights: LossWeights,
    ) -> Result<Self> {
        weights.validate()?;
        if proximity.n() != input.nrows() {
            return Err(CdneError::shape("objective proximity", input.nrows(), proximity.n()));
        }
        if input.nrows() == 0 {
            return Err(CdneError::invalid("objective over zero nodes"));
        }
        Ok(Self {
            penalty: penalty_matrix(input, weights.beta, layer_index),
            input: CowArray::from(input),
            proximity: Cow::Borrowed(proximity),
            side,
            weights,
        })
    }

    pub fn n(&self) -> usize {
        self.input.nrows()
    }

    pub fn input(&self) -> ArrayView2<'_, f64> {
        self.input.view()
    }

    pub fn weights(&self) -> LossWeights {
        self.weights
    }

    pub fn side(&self) -> &Side<'a> {
        &self.side
    }

    /// The same objective over a subset of nodes: pairwise terms keep only
    /// in-subset pairs and every `1/n` factor uses the subset size.
    pub fn restrict(&self, rows: &[usize]) -> LayerObjective<'static> {
        let side = match &self.side {
            Side::Source { labels } => Side::Source { labels: Cow::Owned(labels.restrict(rows)) },
            Side::Target { alignment } => Side::Target {
                alignment: Cow::Owned(alignment.restrict(rows)),
            },
        };
        LayerObjective {
            input: CowArray::from(self.input.select(Axis(0), rows)),
            penalty: self.penalty.select(Axis(0), rows),
            proximity: Cow::Owned(self.proximity.restrict(rows)),
            side,
            weights: self.weights,
        }
    }

    fn check_params(&self, params: &LayerParams) -> Result<()> {
        params.check_shapes()?;
        if params.input_dim() != self.input.ncols() {
            return Err(CdneError::shape("objective input width", self.input.ncols(), params.input_dim()));
        }
        if let Side::Target { alignment } = &self.side {
            if alignment.dim() != params.hidden_dim() {
                return Err(CdneError::shape(
                    "alignment representation width",
                    params.hidden_dim(),
                    alignment.dim(),
                ));
            }
        }
        Ok(())
    }

    /// Hidden representation `H` for the objective's input.
    pub fn hidden(&self, params: &LayerParams) -> Result<Array2<f64>> {
        super::encode(self.input.view(), params)
    }

    pub fn evaluate(&self, params: &LayerParams) -> Result<LossBreakdown> {
        Ok(self.run(params, false)?.0)
    }

    /// Loss and its gradient with respect to every parameter, including the
    /// paths through `H` of the pairwise and MMD terms.
    pub fn evaluate_with_gradients(&self, params: &LayerParams) -> Result<(LossBreakdown, LayerParams)> {
        let (loss, grad) = self.run(params, true)?;
        Ok((loss, grad.expect("gradient requested")))
    }

    fn run(&self, params: &LayerParams, want_grad: bool) -> Result<(LossBreakdown, Option<LayerParams>)> {
        self.check_params(params)?;
        let w = &self.weights;
        let input = self.input.view();
        let n = input.nrows() as f64;

        let mut z1 = input.dot(&params.w1.t());
        z1 += &params.b1;
        let h = z1.mapv(sigmoid);
        let mut z2 = h.dot(&params.w2.t());
        z2 += &params.b2;
        let rec = z2.mapv(sigmoid);

        // P ⊙ (H_rec - H_prev)
        let mut weighted = &rec - &input;
        weighted *= &self.penalty;
        let recon = weighted.iter().map(|e| e * e).sum::<f64>() / (2.0 * n);

        let mut loss = LossBreakdown {
            recon,
            l2: l2_reg(params),
            ..LossBreakdown::default()
        };
        let mut dh: Option<Array2<f64>> = None;
        let mut add_term = |value: &mut f64, weight: f64, (v, g): (f64, Array2<f64>)| {
            *value = v;
            if want_grad {
                match dh.as_mut() {
                    Some(acc) => acc.scaled_add(weight, &g),
                    None => dh = Some(g * weight),
                }
            }
        };

        if w.alpha != 0.0 {
            add_term(&mut loss.conn, w.alpha, self.proximity.loss_and_gradient(h.view()));
        }
        match &self.side {
            Side::Source { labels } => {
                if w.phi != 0.0 {
                    add_term(&mut loss.label, w.phi, labels.loss_and_gradient(h.view()));
                }
            }
            Side::Target { alignment } => {
                if w.mu != 0.0 {
                    add_term(&mut loss.mmd_m, w.mu, alignment.marginal(h.view()));
                }
                if w.gamma != 0.0 {
                    add_term(&mut loss.mmd_c, w.gamma, alignment.conditional(h.view()));
                }
            }
        }
        let (phi, mu, gamma) = match self.side {
            Side::Source { .. } => (w.phi, 0.0, 0.0),
            Side::Target { .. } => (0.0, w.mu, w.gamma),
        };
        loss.total = loss.recon
            + w.alpha * loss.conn
            + phi * loss.label
            + mu * loss.mmd_m
            + gamma * loss.mmd_c
            + w.lambda * loss.l2;

        if !want_grad {
            return Ok((loss, None));
        }

        // dR/dH_rec = P ⊙ P ⊙ (H_rec - H_prev) / n, then through the sigmoid.
        weighted *= &self.penalty;
        weighted /= n;
        let dz2 = weighted * &rec.mapv(|r| r * (1.0 - r));
        let mut gw2 = dz2.t().dot(&h);
        gw2.scaled_add(w.lambda, &params.w2);
        let gb2 = dz2.sum_axis(Axis(0));

        let mut dh_total = dz2.dot(&params.w2);
        if let Some(extra) = dh {
            dh_total += &extra;
        }
        let dz1 = dh_total * &h.mapv(|v| v * (1.0 - v));
        let mut gw1 = dz1.t().dot(&input);
        gw1.scaled_add(w.lambda, &params.w1);
        let gb1 = dz1.sum_axis(Axis(0));

        Ok((
            loss,
            Some(LayerParams {
                w1: gw1,
                b1: gb1,
                w2: gw2,
                b2: gb2,
            }),
        ))
    }
}
