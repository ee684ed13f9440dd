//! Attributed networks, union attribute spaces, transfer tasks and the
//! planted-partition generator used for desk-scale experiments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CdneError, Result};

/// One undirected network with sparse node attributes and (possibly empty)
/// label sets. Node index `i` refers to `node_ids[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedNetwork {
    node_ids: Vec<String>,
    /// Undirected edges stored once as `(i, j)` with `i < j`.
    edges: BTreeSet<(usize, usize)>,
    attributes: Vec<BTreeMap<String, f64>>,
    labels: Vec<BTreeSet<String>>,
}

impl AttributedNetwork {
    /// Builds a network from already-indexed parts. Self-loops are dropped,
    /// edge orientation is ignored and zero attribute values are treated as
    /// absent.
    pub fn new(
        node_ids: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        attributes: Vec<BTreeMap<String, f64>>,
        labels: Vec<BTreeSet<String>>,
    ) -> Result<Self> {
        let n = node_ids.len();
        let unique: BTreeSet<&str> = node_ids.iter().map(String::as_str).collect();
        if unique.len() != n {
            return Err(CdneError::invalid("duplicate node ids"));
        }
        if attributes.len() != n || labels.len() != n {
            return Err(CdneError::shape(
                "AttributedNetwork::new",
                n,
                (attributes.len(), labels.len()),
            ));
        }
        let mut edge_set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(CdneError::invalid(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if a != b {
                edge_set.insert((a.min(b), a.max(b)));
            }
        }
        let mut cleaned = Vec::with_capacity(n);
        for row in attributes {
            let mut kept = BTreeMap::new();
            for (name, value) in row {
                if !value.is_finite() || value < 0.0 {
                    return Err(CdneError::invalid(format!(
                        "attribute {name} has invalid value {value}"
                    )));
                }
                if value > 0.0 {
                    kept.insert(name, value);
                }
            }
            cleaned.push(kept);
        }
        Ok(Self {
            node_ids,
            edges: edge_set,
            attributes: cleaned,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.node_ids.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn attributes(&self, node: usize) -> &BTreeMap<String, f64> {
        &self.attributes[node]
    }

    pub fn labels(&self, node: usize) -> &BTreeSet<String> {
        &self.labels[node]
    }

    /// Neighbor lists in ascending index order.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn attribute_names(&self) -> BTreeSet<&str> {
        self.attributes
            .iter()
            .flat_map(|row| row.keys().map(String::as_str))
            .collect()
    }

    pub fn label_names(&self) -> BTreeSet<&str> {
        self.labels
            .iter()
            .flat_map(|set| set.iter().map(String::as_str))
            .collect()
    }

    /// Returns a copy with every label set replaced.
    pub fn with_labels(&self, labels: Vec<BTreeSet<String>>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(CdneError::shape("with_labels", self.n(), labels.len()));
        }
        Ok(Self {
            labels,
            ..self.clone()
        })
    }

    /// Returns a copy with every attribute row replaced.
    pub fn with_attributes(&self, attributes: Vec<BTreeMap<String, f64>>) -> Result<Self> {
        Self::new(
            self.node_ids.clone(),
            self.edges.iter().copied(),
            attributes,
            self.labels.clone(),
        )
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| CdneError::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').to_string()))
        .collect())
}

fn split_fields<'a>(path: &Path, line: usize, text: &'a str, want: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = text.split('\t').collect();
    if fields.len() != want || fields.iter().any(|f| f.is_empty()) {
        return Err(CdneError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("expected {want} non-empty tab-separated fields"),
        });
    }
    Ok(fields)
}

/// Loads a network from edge, attribute and label TSV files.
///
/// Node indices follow the lexicographic order of all ids seen across the
/// three files. Duplicate `(node, attribute)` rows keep the last value.
pub fn load_network(edge_file: &Path, attr_file: &Path, label_file: &Path) -> Result<AttributedNetwork> {
    let mut raw_edges = Vec::new();
    for (line, text) in read_lines(edge_file)? {
        let f = split_fields(edge_file, line, &text, 2)?;
        raw_edges.push((f[0].to_string(), f[1].to_string()));
    }
    let mut raw_attrs = Vec::new();
    for (line, text) in read_lines(attr_file)? {
        let f = split_fields(attr_file, line, &text, 3)?;
        let value: f64 = f[2].parse().map_err(|_| CdneError::Parse {
            path: attr_file.to_path_buf(),
            line,
            message: format!("bad attribute value {:?}", f[2]),
        })?;
        if !value.is_finite() || value < 0.0 {
            return Err(CdneError::Parse {
                path: attr_file.to_path_buf(),
                line,
                message: format!("attribute value must be a nonnegative real, got {value}"),
            });
        }
        raw_attrs.push((f[0].to_string(), f[1].to_string(), value));
    }
    let mut raw_labels = Vec::new();
    for (line, text) in read_lines(label_file)? {
        let f = split_fields(label_file, line, &text, 2)?;
        raw_labels.push((f[0].to_string(), f[1].to_string()));
    }

    let ids: BTreeSet<&str> = raw_edges
        .iter()
        .flat_map(|(a, b)| [a.as_str(), b.as_str()])
        .chain(raw_attrs.iter().map(|(a, _, _)| a.as_str()))
        .chain(raw_labels.iter().map(|(a, _)| a.as_str()))
        .collect();
    let node_ids: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
    let index_of = |id: &str| node_ids.binary_search_by(|probe| probe.as_str().cmp(id)).unwrap();

    let edges: Vec<(usize, usize)> = raw_edges
        .iter()
        .map(|(a, b)| (index_of(a), index_of(b)))
        .collect();
    let mut attributes = vec![BTreeMap::new(); node_ids.len()];
    for (node, name, value) in &raw_attrs {
        attributes[index_of(node)].insert(name.clone(), *value);
    }
    let mut labels = vec![BTreeSet::new(); node_ids.len()];
    for (node, label) in &raw_labels {
        labels[index_of(node)].insert(label.clone());
    }
    AttributedNetwork::new(node_ids, edges, attributes, labels)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CdneError::io(path, e))
}

/// Writes the three TSV files read by [`load_network`], sorted by node id and
/// then by the secondary key.
pub fn write_network(
    net: &AttributedNetwork,
    edge_file: &Path,
    attr_file: &Path,
    label_file: &Path,
) -> Result<()> {
    let ids = &net.node_ids;
    let mut edge_rows: Vec<(&str, &str)> = net
        .edges
        .iter()
        .map(|&(a, b)| {
            let (x, y) = (ids[a].as_str(), ids[b].as_str());
            if x <= y { (x, y) } else { (y, x) }
        })
        .collect();
    edge_rows.sort_unstable();
    let mut out = String::new();
    for (a, b) in edge_rows {
        let _ = writeln!(out, "{a}\t{b}");
    }
    write_text(edge_file, &out)?;

    let mut order: Vec<usize> = (0..net.n()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));

    out.clear();
    for &i in &order {
        for (name, value) in &net.attributes[i] {
            let _ = writeln!(out, "{}\t{name}\t{value}", ids[i]);
        }
    }
    write_text(attr_file, &out)?;

    out.clear();
    for &i in &order {
        for label in &net.labels[i] {
            let _ = writeln!(out, "{}\t{label}", ids[i]);
        }
    }
    write_text(label_file, &out)
}

/// Sorted union of the attribute names of two networks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnionAttributeSpace {
    names: Vec<String>,
}

impl UnionAttributeSpace {
    pub fn new(names: impl IntoIterator<Item = String>) -> Self {
        let set: BTreeSet<String> = names.into_iter().collect();
        Self {
            names: set.into_iter().collect(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of attributes, `W`.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.binary_search_by(|p| p.as_str().cmp(name)).ok()
    }
}

pub fn build_union_attribute_space(
    source: &AttributedNetwork,
    target: &AttributedNetwork,
) -> UnionAttributeSpace {
    UnionAttributeSpace::new(
        source
            .attribute_names()
            .into_iter()
            .chain(target.attribute_names())
            .map(str::to_string),
    )
}

/// Dense `n x W` attribute matrix with columns in `space` order.
pub fn attribute_matrix(net: &AttributedNetwork, space: &UnionAttributeSpace) -> Result<Array2<f64>> {
    let mut a = Array2::zeros((net.n(), space.len()));
    for (i, row) in net.attributes.iter().enumerate() {
        for (name, &value) in row {
            let w = space.index_of(name).ok_or_else(|| {
                CdneError::invalid(format!("attribute {name:?} is missing from the union space"))
            })?;
            a[[i, w]] = value;
        }
    }
    Ok(a)
}

/// Sorted set of label names shared by both networks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelUniverse {
    names: Vec<String>,
}

impl LabelUniverse {
    pub fn new(names: impl IntoIterator<Item = String>) -> Result<Self> {
        let set: BTreeSet<String> = names.into_iter().collect();
        if set.len() < 2 {
            return Err(CdneError::invalid(format!(
                "a label universe needs at least 2 labels, found {}",
                set.len()
            )));
        }
        Ok(Self {
            names: set.into_iter().collect(),
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of classes, `C`.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.binary_search_by(|p| p.as_str().cmp(name)).ok()
    }

    /// Binary `n x C` label matrix. Rows listed in `keep` are filled, all
    /// others are zero; `None` fills every row.
    pub fn label_matrix(&self, net: &AttributedNetwork, keep: Option<&BTreeSet<usize>>) -> Array2<f64> {
        let mut y = Array2::zeros((net.n(), self.len()));
        for i in 0..net.n() {
            if keep.is_some_and(|k| !k.contains(&i)) {
                continue;
            }
            for label in net.labels(i) {
                if let Some(c) = self.index_of(label) {
                    y[[i, c]] = 1.0;
                }
            }
        }
        y
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// Draws `round(fraction * n)` target nodes as the labeled set.
pub fn split_target_labels(
    target: &AttributedNetwork,
    fraction: f64,
    seed: u64,
) -> Result<(BTreeSet<usize>, BTreeSet<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CdneError::invalid(format!(
            "label fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = target.n();
    let k = round_half_up(fraction * n as f64).min(n);
    if k == 0 {
        log::warn!("label fraction {fraction} leaves no labeled target nodes (n = {n})");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labeled: BTreeSet<usize> = index::sample(&mut rng, n, k).into_iter().collect();
    let unlabeled = (0..n).filter(|i| !labeled.contains(i)).collect();
    Ok((labeled, unlabeled))
}

/// Flips `round(p * #nonzero)` nonzero cells of the `n x W` attribute grid to
/// zero and `round(p * #zero)` zero cells to one.
pub fn perturb_attributes(
    net: &AttributedNetwork,
    space: &UnionAttributeSpace,
    p: f64,
    seed: u64,
) -> Result<AttributedNetwork> {
    if !(0.0..=1.0).contains(&p) {
        return Err(CdneError::invalid(format!("perturbation proportion must lie in [0, 1], got {p}")));
    }
    let dense = attribute_matrix(net, space)?;
    let w = space.len();
    let (mut nonzero, mut zero) = (Vec::new(), Vec::new());
    for ((i, j), &v) in dense.indexed_iter() {
        if v > 0.0 {
            nonzero.push(i * w + j);
        } else {
            zero.push(i * w + j);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drop = round_half_up(p * nonzero.len() as f64).min(nonzero.len());
    let add = round_half_up(p * zero.len() as f64).min(zero.len());
    let dropped = index::sample(&mut rng, nonzero.len(), drop);
    let added = index::sample(&mut rng, zero.len(), add);

    let mut rows: Vec<BTreeMap<String, f64>> = net.attributes.clone();
    for idx in dropped.iter() {
        let cell = nonzero[idx];
        rows[cell / w].remove(&space.names[cell % w]);
    }
    for idx in added.iter() {
        let cell = zero[idx];
        rows[cell / w].insert(space.names[cell % w].clone(), 1.0);
    }
    net.with_attributes(rows)
}

/// A source/target pair sharing one attribute space and one label universe.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferTask {
    pub source: AttributedNetwork,
    /// Carries ground-truth labels for every node; only `target_labeled`
    /// rows are observable during training.
    pub target: AttributedNetwork,
    pub attr_space: UnionAttributeSpace,
    pub labels: LabelUniverse,
    pub target_labeled: BTreeSet<usize>,
    pub target_unlabeled: BTreeSet<usize>,
    pub seed: u64,
}

impl TransferTask {
    pub fn new(
        source: AttributedNetwork,
        target: AttributedNetwork,
        label_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        if let Some(i) = (0..source.n()).find(|&i| source.labels(i).is_empty()) {
            return Err(CdneError::invalid(format!(
                "source node {:?} has no label",
                source.node_ids()[i]
            )));
        }
        if let Some(i) = (0..target.n()).find(|&i| target.labels(i).is_empty()) {
            return Err(CdneError::invalid(format!(
                "target node {:?} has no ground-truth label",
                target.node_ids()[i]
            )));
        }
        let labels = LabelUniverse::new(
            source
                .label_names()
                .into_iter()
                .chain(target.label_names())
                .map(str::to_string),
        )?;
        let attr_space = build_union_attribute_space(&source, &target);
        let (target_labeled, target_unlabeled) = split_target_labels(&target, label_fraction, seed)?;
        Ok(Self {
            source,
            target,
            attr_space,
            labels,
            target_labeled,
            target_unlabeled,
            seed,
        })
    }

    /// Same networks with a freshly drawn labeled/unlabeled target split.
    pub fn resplit(&self, label_fraction: f64, seed: u64) -> Result<Self> {
        let (target_labeled, target_unlabeled) = split_target_labels(&self.target, label_fraction, seed)?;
        Ok(Self {
            target_labeled,
            target_unlabeled,
            seed,
            ..self.clone()
        })
    }

    /// `Y^s`, the full source label matrix.
    pub fn source_label_matrix(&self) -> Array2<f64> {
        self.labels.label_matrix(&self.source, None)
    }

    /// Observable target labels: zero on every unlabeled row.
    pub fn target_observed_label_matrix(&self) -> Array2<f64> {
        self.labels.label_matrix(&self.target, Some(&self.target_labeled))
    }

    pub fn target_truth_label_matrix(&self) -> Array2<f64> {
        self.labels.label_matrix(&self.target, None)
    }
}

/// Parameters of the planted-partition transfer-task generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub classes: usize,
    pub n_s: usize,
    pub n_t: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub attrs_per_class: usize,
    /// Probability that a node carries each attribute of its own class.
    pub attr_signal: f64,
    pub noise_p: f64,
    pub label_fraction: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            classes: 4,
            n_s: 400,
            n_t: 400,
            p_in: 0.05,
            p_out: 0.005,
            attrs_per_class: 15,
            attr_signal: 0.8,
            noise_p: 0.3,
            label_fraction: 0.01,
            seed: 0,
        }
    }
}

const OFF_CLASS_ATTR_PROB: f64 = 0.05;

fn pad_width(count: usize) -> usize {
    count.saturating_sub(1).to_string().len()
}

fn synth_network(params: &SynthParams, prefix: &str, n: usize, rng: &mut ChaCha8Rng) -> Result<AttributedNetwork> {
    let id_width = pad_width(n);
    let class_width = pad_width(params.classes);
    let attr_width = pad_width(params.attrs_per_class);
    let node_ids: Vec<String> = (0..n).map(|i| format!("{prefix}{i:0id_width$}")).collect();
    let class_of = |i: usize| i % params.classes;

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if class_of(i) == class_of(j) { params.p_in } else { params.p_out };
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }

    let mut attributes = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = BTreeMap::new();
        for c in 0..params.classes {
            let p = if c == class_of(i) { params.attr_signal } else { OFF_CLASS_ATTR_PROB };
            for k in 0..params.attrs_per_class {
                if rng.random_bool(p) {
                    row.insert(format!("w{c:0class_width$}_{k:0attr_width$}"), 1.0);
                }
            }
        }
        attributes.push(row);
    }
    let labels = (0..n)
        .map(|i| BTreeSet::from([format!("c{:0class_width$}", class_of(i))]))
        .collect();
    AttributedNetwork::new(node_ids, edges, attributes, labels)
}

/// Generates a seeded source/target pair of planted-partition networks with
/// class-correlated binary attributes. Node `i` belongs to class
/// `i % classes`.
pub fn synth_transfer_task(params: &SynthParams) -> Result<TransferTask> {
    let prob = |name: &str, v: f64| {
        if (0.0..=1.0).contains(&v) {
            Ok(())
        } else {
            Err(CdneError::invalid(format!("{name} must lie in [0, 1], got {v}")))
        }
    };
    prob("p_in", params.p_in)?;
    prob("p_out", params.p_out)?;
    prob("attr_signal", params.attr_signal)?;
    prob("noise_p", params.noise_p)?;
    if params.p_in <= params.p_out {
        return Err(CdneError::invalid("p_in must exceed p_out"));
    }
    if params.classes < 2 {
        return Err(CdneError::invalid("at least 2 classes are required"));
    }
    if params.attrs_per_class < 1 {
        return Err(CdneError::invalid("attrs_per_class must be at least 1"));
    }
    if params.n_s < params.classes || params.n_t < params.classes {
        return Err(CdneError::invalid("each network needs at least one node per class"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let source = synth_network(params, "s", params.n_s, &mut rng)?;
    let target = synth_network(params, "t", params.n_t, &mut rng)?;
    let space = build_union_attribute_space(&source, &target);
    let source = perturb_attributes(&source, &space, params.noise_p, rng.next_u64())?;
    let target = perturb_attributes(&target, &space, params.noise_p, rng.next_u64())?;
    TransferTask::new(source, target, params.label_fraction, params.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(ids: &[&str], edges: &[(usize, usize)]) -> AttributedNetwork {
        let n = ids.len();
        AttributedNetwork::new(
            ids.iter().map(|s| s.to_string()).collect(),
            edges.iter().copied(),
            vec![BTreeMap::new(); n],
            vec![BTreeSet::new(); n],
        )
        .unwrap()
    }

    fn with_attrs(ids: &[&str], attrs: &[(usize, &str, f64)]) -> AttributedNetwork {
        let mut rows = vec![BTreeMap::new(); ids.len()];
        for &(i, name, v) in attrs {
            rows[i].insert(name.to_string(), v);
        }
        net(ids, &[]).with_attributes(rows).unwrap()
    }

    #[test]
    fn union_space_is_sorted_union() {
        let s = with_attrs(&["a", "b"], &[(0, "x", 1.0), (1, "z", 1.0)]);
        let t = with_attrs(&["c"], &[(0, "y", 1.0), (0, "z", 2.0)]);
        let space = build_union_attribute_space(&s, &t);
        assert_eq!(space.names(), ["x", "y", "z"]);
        assert_eq!(space.len(), 3);
        assert_eq!(build_union_attribute_space(&s, &s).len(), 2);
    }

    #[test]
    fn attribute_free_networks_give_empty_space() {
        let s = net(&["a"], &[]);
        let space = build_union_attribute_space(&s, &s);
        assert!(space.is_empty());
        assert_eq!(attribute_matrix(&s, &space).unwrap().dim(), (1, 0));
    }

    #[test]
    fn attribute_matrix_places_values() {
        let s = with_attrs(&["a", "b"], &[(0, "x", 1.5)]);
        let space = UnionAttributeSpace::new(["x".to_string(), "y".to_string()]);
        let a = attribute_matrix(&s, &space).unwrap();
        assert_eq!(a.row(0).to_vec(), vec![1.5, 0.0]);
        assert_eq!(a.row(1).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn attribute_matrix_rejects_unknown_name() {
        let s = with_attrs(&["a"], &[(0, "q", 1.0)]);
        let space = UnionAttributeSpace::new(["x".to_string()]);
        assert!(attribute_matrix(&s, &space).is_err());
    }

    #[test]
    fn self_loops_and_duplicates_are_dropped() {
        let g = net(&["a", "b"], &[(0, 0), (0, 1), (1, 0)]);
        assert_eq!(g.edges().len(), 1);
    }

    #[test]
    fn split_sizes_follow_rounding() {
        let ids: Vec<String> = (0..100).map(|i| format!("n{i:03}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let g = net(&refs, &[]);
        assert_eq!(split_target_labels(&g, 0.01, 3).unwrap().0.len(), 1);
        assert_eq!(split_target_labels(&g, 0.10, 3).unwrap().0.len(), 10);
        assert_eq!(split_target_labels(&g, 0.10, 3).unwrap(), split_target_labels(&g, 0.10, 3).unwrap());
        let (l, u) = split_target_labels(&g, 0.3, 9).unwrap();
        assert_eq!(l.len() + u.len(), 100);
        assert!(l.is_disjoint(&u));
        assert!(split_target_labels(&g, 0.0, 1).is_err());
        assert!(split_target_labels(&g, 1.0, 1).is_err());
    }

    #[test]
    fn split_allows_zero_labeled() {
        let g = net(&["a", "b", "c"], &[]);
        let (l, u) = split_target_labels(&g, 0.1, 0).unwrap();
        assert!(l.is_empty());
        assert_eq!(u.len(), 3);
    }

    #[test]
    fn perturb_counts() {
        let ids: Vec<String> = (0..10).map(|i| format!("n{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let attrs: Vec<(usize, &str, f64)> = (0..10).map(|i| (i, "x", 2.0)).collect();
        let g = with_attrs(&refs, &attrs);
        let space = UnionAttributeSpace::new(["x".to_string(), "y".to_string()]);
        let before = attribute_matrix(&g, &space).unwrap();

        let same = perturb_attributes(&g, &space, 0.0, 1).unwrap();
        assert_eq!(same, g);

        let p = perturb_attributes(&g, &space, 0.3, 1).unwrap();
        let after = attribute_matrix(&p, &space).unwrap();
        let zeroed = before.iter().zip(after.iter()).filter(|(b, a)| **b > 0.0 && **a == 0.0).count();
        let raised = before.iter().zip(after.iter()).filter(|(b, a)| **b == 0.0 && **a == 1.0).count();
        let changed = before.iter().zip(after.iter()).filter(|(b, a)| b != a).count();
        assert_eq!(zeroed, 3);
        assert_eq!(raised, 3);
        assert_eq!(changed, 6);

        let full = perturb_attributes(&g, &space, 1.0, 1).unwrap();
        let swapped = attribute_matrix(&full, &space).unwrap();
        for (b, a) in before.iter().zip(swapped.iter()) {
            assert_eq!(*a, if *b > 0.0 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn label_universe_needs_two_labels() {
        assert!(LabelUniverse::new(["a".to_string()]).is_err());
        assert_eq!(LabelUniverse::new(["b".into(), "a".into(), "b".into()]).unwrap().names(), ["a", "b"]);
    }

    #[test]
    fn synth_rejects_bad_params() {
        let mut p = SynthParams { p_out: 0.1, p_in: 0.05, ..SynthParams::default() };
        assert!(synth_transfer_task(&p).is_err());
        p = SynthParams { classes: 1, ..SynthParams::default() };
        assert!(synth_transfer_task(&p).is_err());
        p = SynthParams { attrs_per_class: 0, ..SynthParams::default() };
        assert!(synth_transfer_task(&p).is_err());
    }

    #[test]
    fn synth_balanced_and_deterministic() {
        let p = SynthParams { n_s: 400, n_t: 400, ..SynthParams::default() };
        let task = synth_transfer_task(&p).unwrap();
        let y = task.source_label_matrix();
        for c in 0..4 {
            assert_eq!(y.column(c).sum(), 100.0);
        }
        assert_eq!(task, synth_transfer_task(&p).unwrap());
        assert_eq!(task.target_labeled.len(), 4);
    }

    #[test]
    fn synth_without_cross_edges() {
        let p = SynthParams { p_out: 0.0, n_s: 60, n_t: 60, ..SynthParams::default() };
        let task = synth_transfer_task(&p).unwrap();
        for g in [&task.source, &task.target] {
            assert!(!g.edges().is_empty());
            assert!(g.edges().iter().all(|&(a, b)| a % 4 == b % 4));
        }
    }
}
