//! Multi-layer edge-list ingestion.
//!
//! One record per line, `layer,i,j[,weight]`; `#` starts a comment. Two
//! optional directives fix the universes:
//!
//! ```text
//! # nodes: USA CAN MEX
//! # layers: wheat rice
//! ```
//!
//! Without `# nodes:` the node set is every id that appears in a record.
//! With it, a record naming an undeclared node is an error. A pair becomes an
//! edge when its weight exceeds the threshold (missing weight = 1); repeated
//! or reversed records keep the largest weight. Nodes whose total degree over
//! all layers is below the minimum are removed from every layer in a single
//! pass.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Result, ScceError};
use crate::model::{BinaryLayer, MultiLayerNetwork};

/// Compares ids numerically when both parse as integers, otherwise as
/// strings; integers sort first.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<i128>(), b.parse::<i128>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IngestOptions {
    /// An edge requires `weight > threshold`.
    pub threshold: f64,
    pub min_total_degree: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            threshold: 0.0,
            min_total_degree: 0,
        }
    }
}

/// Parsed records before thresholding.
#[derive(Debug, Clone, Default)]
pub struct EdgeListDataset {
    pub declared_nodes: Option<Vec<String>>,
    pub declared_layers: Option<Vec<String>>,
    /// `(layer, i, j) -> weight`, with `i < j` by id order.
    pub records: BTreeMap<(String, String, String), f64>,
    pub self_loops: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub threshold: f64,
    pub min_total_degree: usize,
    pub records: usize,
    pub nodes_kept: usize,
    pub nodes_dropped: Vec<String>,
    pub layers: Vec<String>,
    pub edges_per_layer: Vec<usize>,
    pub densities: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct IngestedNetwork {
    pub network: MultiLayerNetwork,
    pub node_ids: Vec<String>,
    pub layer_ids: Vec<String>,
    pub report: IngestReport,
}

fn directive<'a>(comment: &'a str, name: &str) -> Option<&'a str> {
    let body = comment.trim_start_matches('#').trim_start();
    body.strip_prefix(name)
        .and_then(|rest| rest.trim_start().strip_prefix(':'))
}

fn split_ids(list: &str) -> Vec<String> {
    list.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_error(line: usize, message: impl Into<String>) -> ScceError {
    ScceError::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_edge_list<R: BufRead>(reader: R) -> Result<EdgeListDataset> {
    let mut data = EdgeListDataset::default();
    let mut seen_record = false;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('#') {
            if let Some(list) = directive(trimmed, "nodes") {
                if data.declared_nodes.is_some() {
                    return Err(parse_error(lineno, "duplicate nodes directive"));
                }
                data.declared_nodes = Some(split_ids(list));
            } else if let Some(list) = directive(trimmed, "layers") {
                if data.declared_layers.is_some() {
                    return Err(parse_error(lineno, "duplicate layers directive"));
                }
                data.declared_layers = Some(split_ids(list));
            }
            continue;
        }
        let content = trimmed.split('#').next().unwrap_or("").trim();
        let fields: Vec<&str> = content.split(',').map(str::trim).collect();
        if !seen_record && fields.len() >= 3 && fields[..3] == ["layer", "i", "j"] {
            seen_record = true;
            continue;
        }
        seen_record = true;
        if fields.len() != 3 && fields.len() != 4 {
            return Err(parse_error(
                lineno,
                format!("expected `layer,i,j[,weight]`, found {} fields", fields.len()),
            ));
        }
        if let Some(empty) = fields.iter().position(|f| f.is_empty()) {
            return Err(parse_error(lineno, format!("field {} is empty", empty + 1)));
        }
        let weight = match fields.get(3) {
            None => 1.0,
            Some(w) => w
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_error(lineno, format!("weight `{w}` is not a finite number")))?,
        };
        let (layer, a, b) = (fields[0], fields[1], fields[2]);
        if a == b {
            data.self_loops += 1;
            continue;
        }
        let (i, j) = if compare_ids(a, b) == Ordering::Less { (a, b) } else { (b, a) };
        let entry = data
            .records
            .entry((layer.to_string(), i.to_string(), j.to_string()))
            .or_insert(f64::NEG_INFINITY);
        *entry = entry.max(weight);
    }
    if data.self_loops > 0 {
        let msg = format!("ignored {} self-loop record(s)", data.self_loops);
        log::warn!("{msg}");
        data.warnings.push(msg);
    }
    Ok(data)
}

fn sorted_unique(ids: impl IntoIterator<Item = String>) -> Vec<String> {
    let set: BTreeSet<String> = ids.into_iter().collect();
    let mut v: Vec<String> = set.into_iter().collect();
    v.sort_by(|a, b| compare_ids(a, b));
    v
}

/// Thresholds, applies the degree filter and builds the network.
pub fn build_network(mut data: EdgeListDataset, options: IngestOptions) -> Result<IngestedNetwork> {
    let nodes = match &data.declared_nodes {
        Some(declared) => {
            let nodes = sorted_unique(declared.iter().cloned());
            if nodes.len() != declared.len() {
                return Err(ScceError::InvalidNetwork("nodes directive lists an id twice".into()));
            }
            let known: BTreeSet<&String> = nodes.iter().collect();
            if let Some((_, i, j)) = data.records.keys().find(|(_, i, j)| !known.contains(i) || !known.contains(j)) {
                let bad = if known.contains(i) { j } else { i };
                return Err(ScceError::InvalidNetwork(format!(
                    "inconsistent node universe: node `{bad}` is not declared"
                )));
            }
            nodes
        }
        None => sorted_unique(data.records.keys().flat_map(|(_, i, j)| [i.clone(), j.clone()])),
    };
    let layers = match &data.declared_layers {
        Some(declared) => {
            let layers = sorted_unique(declared.iter().cloned());
            let known: BTreeSet<&String> = layers.iter().collect();
            if let Some((l, _, _)) = data.records.keys().find(|(l, _, _)| !known.contains(l)) {
                return Err(ScceError::InvalidNetwork(format!("layer `{l}` is not declared")));
            }
            layers
        }
        None => sorted_unique(data.records.keys().map(|(l, _, _)| l.clone())),
    };
    if layers.is_empty() {
        return Err(ScceError::InvalidNetwork("edge list contains no layers".into()));
    }
    if nodes.len() < 2 {
        return Err(ScceError::InvalidNetwork("edge list contains fewer than two nodes".into()));
    }
    let node_index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let layer_index: HashMap<&str, usize> = layers.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let edges: Vec<(usize, usize, usize)> = data
        .records
        .iter()
        .filter(|(_, &w)| w > options.threshold)
        .map(|((l, i, j), _)| (layer_index[l.as_str()], node_index[i.as_str()], node_index[j.as_str()]))
        .collect();
    if edges.is_empty() {
        let msg = format!("no record exceeds threshold {}; all layers are empty", options.threshold);
        log::warn!("{msg}");
        data.warnings.push(msg);
    }

    let mut total_degree = vec![0usize; nodes.len()];
    for &(_, i, j) in &edges {
        total_degree[i] += 1;
        total_degree[j] += 1;
    }
    let keep: Vec<usize> = (0..nodes.len())
        .filter(|&i| total_degree[i] >= options.min_total_degree)
        .collect();
    let dropped: Vec<String> = (0..nodes.len())
        .filter(|&i| total_degree[i] < options.min_total_degree)
        .map(|i| nodes[i].clone())
        .collect();
    if keep.len() < 2 {
        return Err(ScceError::InvalidNetwork(format!(
            "degree filter keeps {} node(s); at least two are required",
            keep.len()
        )));
    }
    let mut remap = vec![usize::MAX; nodes.len()];
    for (new, &old) in keep.iter().enumerate() {
        remap[old] = new;
    }
    let n = keep.len();
    let mut built = vec![BinaryLayer::empty(n); layers.len()];
    for &(l, i, j) in &edges {
        let (a, b) = (remap[i], remap[j]);
        if a != usize::MAX && b != usize::MAX {
            built[l].insert_edge(a, b)?;
        }
    }
    let network = MultiLayerNetwork::from_layers(n, built)?;
    let node_ids: Vec<String> = keep.iter().map(|&i| nodes[i].clone()).collect();
    let report = IngestReport {
        threshold: options.threshold,
        min_total_degree: options.min_total_degree,
        records: data.records.len(),
        nodes_kept: n,
        nodes_dropped: dropped,
        layers: layers.clone(),
        edges_per_layer: network.layers().iter().map(BinaryLayer::edge_count).collect(),
        densities: network.densities(),
        warnings: data.warnings,
    };
    Ok(IngestedNetwork {
        network,
        node_ids,
        layer_ids: layers,
        report,
    })
}

pub fn ingest_reader<R: BufRead>(reader: R, options: IngestOptions) -> Result<IngestedNetwork> {
    build_network(parse_edge_list(reader)?, options)
}

pub fn ingest_edge_list(path: &Path, options: IngestOptions) -> Result<IngestedNetwork> {
    let file = std::fs::File::open(path)?;
    ingest_reader(std::io::BufReader::new(file), options)
}

/// Writes the network back as an edge list with both directives, so that
/// ingesting the output reproduces the same network and ids.
pub fn export_edge_list<W: Write>(
    mut w: W,
    network: &MultiLayerNetwork,
    node_ids: &[String],
    layer_ids: &[String],
) -> Result<()> {
    if node_ids.len() != network.n() || layer_ids.len() != network.num_layers() {
        return Err(ScceError::DimensionMismatch("id lists do not match the network".into()));
    }
    writeln!(w, "# nodes: {}", node_ids.join(" "))?;
    writeln!(w, "# layers: {}", layer_ids.join(" "))?;
    writeln!(w, "layer,i,j")?;
    for (l, layer) in network.layers().iter().enumerate() {
        for i in 0..network.n() {
            for j in layer.neighbors(i).filter(|&j| j > i) {
                writeln!(w, "{},{},{}", layer_ids[l], node_ids[i], node_ids[j])?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(text: &str, threshold: f64, min: usize) -> Result<IngestedNetwork> {
        ingest_reader(
            text.as_bytes(),
            IngestOptions {
                threshold,
                min_total_degree: min,
            },
        )
    }

    #[test]
    fn numeric_ids_sort_numerically() {
        let mut ids = vec!["10", "9", "b", "a", "-1"];
        ids.sort_by(|a, b| compare_ids(a, b));
        assert_eq!(ids, vec!["-1", "9", "10", "a", "b"]);
    }

    #[test]
    fn duplicates_keep_the_largest_weight() {
        let net = ingest("1,a,b,0.5\n1,b,a,3\n1,a,c,0.2\n", 1.0, 0).unwrap();
        assert_eq!(net.node_ids, vec!["a", "b", "c"]);
        assert!(net.network.layer(0).contains(0, 1));
        assert!(!net.network.layer(0).contains(0, 2));
    }

    #[test]
    fn malformed_lines_report_their_number() {
        match ingest("# header\n1,a,b\n1,a\n", 0.0, 0) {
            Err(ScceError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(ingest("1,a,b,x\n", 0.0, 0), Err(ScceError::Parse { line: 1, .. })));
        assert!(matches!(ingest("1,,b\n", 0.0, 0), Err(ScceError::Parse { line: 1, .. })));
    }

    #[test]
    fn undeclared_node_is_rejected() {
        let err = ingest("# nodes: a b\n1,a,c\n", 0.0, 0).unwrap_err();
        assert!(err.to_string().contains("inconsistent node universe"));
    }

    #[test]
    fn self_loops_are_dropped_with_a_warning() {
        let net = ingest("1,a,a\n1,a,b\n", 0.0, 0).unwrap();
        assert_eq!(net.network.layer(0).edge_count(), 1);
        assert_eq!(net.report.warnings.len(), 1);
    }

    #[test]
    fn high_threshold_gives_empty_layers() {
        let net = ingest("1,a,b,2\n2,b,c,3\n", 10.0, 0).unwrap();
        assert!(net.network.layers().iter().all(|l| l.edge_count() == 0));
        assert!(net.report.warnings.iter().any(|w| w.contains("threshold")));
    }

    #[test]
    fn header_line_is_skipped() {
        let net = ingest("layer,i,j,weight\n1,a,b,1\n", 0.0, 0).unwrap();
        assert_eq!(net.network.layer(0).edge_count(), 1);
    }
}
