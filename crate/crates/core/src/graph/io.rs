//! Line-oriented dataset format.
//!
//! ```text
//! gnum-dataset 1
//! meta <key> <value...>
//! header nodes=<N> dims=<d> propensity=<none|node|p> counterfactual=<yes|no>
//! node <id> <t> <y_obs> [<y1> <y0>] [<p_i>] <x_1> ... <x_d>
//! edge <u> <v>
//! ```
//!
//! Node records appear in id order. Blank lines and `#` comments are ignored.
//! Paths ending in `.gz` are read and written gzip-compressed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use indexmap::IndexMap;
use ndarray::Array2;

use super::{DatasetParts, GraphDataset, GraphError, Propensity};

const MAGIC: &str = "gnum-dataset";
const VERSION: &str = "1";

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Store every edge in both directions.
    pub symmetrize: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { symmetrize: true }
    }
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

pub fn load_dataset(path: impl AsRef<Path>, opts: LoadOptions) -> Result<GraphDataset, GraphError> {
    let path = path.as_ref();
    let file = File::open(path)?;
    if is_gz(path) {
        parse_dataset(BufReader::new(GzDecoder::new(file)), opts)
    } else {
        parse_dataset(BufReader::new(file), opts)
    }
}

pub fn save_dataset(path: impl AsRef<Path>, ds: &GraphDataset) -> Result<(), GraphError> {
    let path = path.as_ref();
    let file = File::create(path)?;
    if is_gz(path) {
        let mut enc = GzEncoder::new(BufWriter::new(file), Compression::default());
        write_dataset(&mut enc, ds)?;
        enc.finish()?.flush()?;
    } else {
        let mut w = BufWriter::new(file);
        write_dataset(&mut w, ds)?;
        w.flush()?;
    }
    Ok(())
}

pub fn write_dataset<W: Write>(w: &mut W, ds: &GraphDataset) -> Result<(), GraphError> {
    writeln!(w, "{MAGIC} {VERSION}")?;
    for (k, v) in ds.metadata() {
        writeln!(w, "meta {} {}", k, v.replace(['\n', '\r'], " "))?;
    }
    let prop = match ds.stored_propensity() {
        None => "none".to_string(),
        Some(Propensity::PerNode(_)) => "node".to_string(),
        Some(Propensity::Constant(p)) => format!("{p:?}"),
    };
    let cf = ds.outcome_t().is_some();
    writeln!(
        w,
        "header nodes={} dims={} propensity={} counterfactual={}",
        ds.n_nodes(),
        ds.feature_dim(),
        prop,
        if cf { "yes" } else { "no" }
    )?;
    let mut line = String::new();
    for i in 0..ds.n_nodes() {
        use std::fmt::Write as _;
        line.clear();
        let _ = write!(line, "node {} {} {:?}", i, ds.treatment()[i], ds.outcome_obs()[i]);
        if let (Some(y1), Some(y0)) = (ds.outcome_t(), ds.outcome_c()) {
            let _ = write!(line, " {:?} {:?}", y1[i], y0[i]);
        }
        if let Some(Propensity::PerNode(p)) = ds.stored_propensity() {
            let _ = write!(line, " {:?}", p[i]);
        }
        for x in ds.features().row(i) {
            let _ = write!(line, " {x:?}");
        }
        writeln!(w, "{line}")?;
    }
    for (u, v) in ds.adjacency().edge_list() {
        writeln!(w, "edge {u} {v}")?;
    }
    Ok(())
}

struct Header {
    nodes: usize,
    dims: usize,
    propensity: HeaderPropensity,
    counterfactual: bool,
}

enum HeaderPropensity {
    None,
    PerNode,
    Constant(f64),
}

fn fmt_err(line: usize, msg: impl Into<String>) -> GraphError {
    GraphError::Format { line, msg: msg.into() }
}

fn parse_num<T: std::str::FromStr>(line: usize, what: &str, s: &str) -> Result<T, GraphError> {
    s.parse().map_err(|_| fmt_err(line, format!("cannot parse {what} from `{s}`")))
}

fn parse_header(line: usize, fields: &[&str]) -> Result<Header, GraphError> {
    let mut kv = IndexMap::new();
    for f in fields {
        let (k, v) = f.split_once('=').ok_or_else(|| fmt_err(line, format!("header field `{f}` is not key=value")))?;
        kv.insert(k, v);
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| fmt_err(line, format!("header is missing `{k}`")));
    let propensity = match get("propensity")? {
        "none" => HeaderPropensity::None,
        "node" => HeaderPropensity::PerNode,
        p => HeaderPropensity::Constant(parse_num(line, "propensity", p)?),
    };
    let counterfactual = match get("counterfactual")? {
        "yes" => true,
        "no" => false,
        other => return Err(fmt_err(line, format!("counterfactual must be yes or no, got `{other}`"))),
    };
    Ok(Header {
        nodes: parse_num(line, "nodes", get("nodes")?)?,
        dims: parse_num(line, "dims", get("dims")?)?,
        propensity,
        counterfactual,
    })
}

pub fn parse_dataset<R: BufRead>(reader: R, opts: LoadOptions) -> Result<GraphDataset, GraphError> {
    let mut header: Option<Header> = None;
    let mut metadata = IndexMap::new();
    let mut features: Vec<f64> = Vec::new();
    let mut treatment = Vec::new();
    let mut y_obs = Vec::new();
    let mut y1 = Vec::new();
    let mut y0 = Vec::new();
    let mut p_node = Vec::new();
    let mut edges = Vec::new();
    let mut seen_magic = false;

    for (idx, raw) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let raw = raw?;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_magic {
            let mut it = line.split_whitespace();
            if it.next() != Some(MAGIC) {
                return Err(fmt_err(lineno, format!("expected `{MAGIC} {VERSION}` first line")));
            }
            match it.next() {
                Some(VERSION) => {}
                v => return Err(fmt_err(lineno, format!("unsupported dataset version {v:?}"))),
            }
            seen_magic = true;
            continue;
        }
        let (kind, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        match kind {
            "meta" => {
                let rest = rest.trim_start();
                let (k, v) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
                metadata.insert(k.to_string(), v.trim().to_string());
            }
            "header" => {
                if header.is_some() {
                    return Err(fmt_err(lineno, "duplicate header"));
                }
                let fields: Vec<&str> = rest.split_whitespace().collect();
                header = Some(parse_header(lineno, &fields)?);
            }
            "node" => {
                let h = header.as_ref().ok_or_else(|| fmt_err(lineno, "node record before header"))?;
                let f: Vec<&str> = rest.split_whitespace().collect();
                let extra = if h.counterfactual { 2 } else { 0 }
                    + usize::from(matches!(h.propensity, HeaderPropensity::PerNode));
                let expected = 3 + extra + h.dims;
                if f.len() != expected {
                    return Err(fmt_err(lineno, format!("node record has {} fields, expected {expected}", f.len())));
                }
                let id: usize = parse_num(lineno, "node id", f[0])?;
                if id != treatment.len() {
                    return Err(fmt_err(lineno, format!("node {id} out of order (expected {})", treatment.len())));
                }
                if id >= h.nodes {
                    return Err(fmt_err(lineno, format!("node {id} exceeds declared count {}", h.nodes)));
                }
                treatment.push(match f[1] {
                    "0" => 0u8,
                    "1" => 1u8,
                    other => return Err(fmt_err(lineno, format!("treatment must be 0 or 1, got `{other}`"))),
                });
                y_obs.push(parse_num(lineno, "outcome", f[2])?);
                let mut pos = 3;
                if h.counterfactual {
                    y1.push(parse_num(lineno, "y1", f[pos])?);
                    y0.push(parse_num(lineno, "y0", f[pos + 1])?);
                    pos += 2;
                }
                if matches!(h.propensity, HeaderPropensity::PerNode) {
                    p_node.push(parse_num(lineno, "propensity", f[pos])?);
                    pos += 1;
                }
                for s in &f[pos..] {
                    features.push(parse_num(lineno, "feature", s)?);
                }
            }
            "edge" => {
                let h = header.as_ref().ok_or_else(|| fmt_err(lineno, "edge record before header"))?;
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 2 {
                    return Err(fmt_err(lineno, "edge record needs two endpoints"));
                }
                let u: usize = parse_num(lineno, "edge endpoint", f[0])?;
                let v: usize = parse_num(lineno, "edge endpoint", f[1])?;
                if u >= h.nodes || v >= h.nodes {
                    return Err(GraphError::Validation(format!(
                        "edge ({u}, {v}) on line {lineno} references a node >= N = {}",
                        h.nodes
                    )));
                }
                edges.push((u, v));
            }
            other => return Err(fmt_err(lineno, format!("unknown record type `{other}`"))),
        }
    }
    let h = header.ok_or_else(|| fmt_err(0, "missing header"))?;
    if treatment.len() != h.nodes {
        return Err(GraphError::Validation(format!(
            "header declares {} nodes but {} node records found",
            h.nodes,
            treatment.len()
        )));
    }
    let features =
        Array2::from_shape_vec((h.nodes, h.dims), features).map_err(|e| GraphError::Validation(e.to_string()))?;
    let propensity = match h.propensity {
        HeaderPropensity::None => None,
        HeaderPropensity::Constant(p) => Some(Propensity::Constant(p)),
        HeaderPropensity::PerNode => Some(Propensity::PerNode(p_node)),
    };
    GraphDataset::new(DatasetParts {
        features,
        edges,
        treatment,
        outcome_obs: y_obs,
        outcome_t: h.counterfactual.then_some(y1),
        outcome_c: h.counterfactual.then_some(y0),
        propensity,
        metadata,
        symmetrize: opts.symmetrize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<GraphDataset, GraphError> {
        parse_dataset(s.as_bytes(), LoadOptions::default())
    }

    #[test]
    fn smallest_graph() {
        let ds = parse(
            "gnum-dataset 1\nheader nodes=2 dims=1 propensity=none counterfactual=no\nnode 0 1 1.0 0.5\nnode 1 0 0.0 0.25\nedge 0 1\n",
        )
        .unwrap();
        assert_eq!(ds.neighbors(0).unwrap(), &[1]);
        assert_eq!(ds.neighbors(1).unwrap(), &[0]);
    }

    #[test]
    fn dangling_edge_names_edge() {
        let err = parse(
            "gnum-dataset 1\nheader nodes=3 dims=0 propensity=none counterfactual=no\nnode 0 1 1\nnode 1 0 0\nnode 2 0 1\nedge 0 5\n",
        )
        .unwrap_err();
        match err {
            GraphError::Validation(msg) => assert!(msg.contains("(0, 5)"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn default_propensity_is_treated_fraction() {
        let ds = parse(
            "gnum-dataset 1\nheader nodes=4 dims=0 propensity=none counterfactual=no\nnode 0 1 1\nnode 1 0 0\nnode 2 1 1\nnode 3 0 1\n",
        )
        .unwrap();
        assert_eq!(ds.propensity(), Propensity::Constant(0.5));
    }

    #[test]
    fn parse_error_has_line_number() {
        let err = parse("gnum-dataset 1\nheader nodes=1 dims=0 propensity=none counterfactual=no\n\nnode 0 1 abc\n")
            .unwrap_err();
        assert!(matches!(err, GraphError::Format { line: 4, .. }), "{err:?}");
    }

    #[test]
    fn canonical_round_trip() {
        let text = "gnum-dataset 1\nmeta source unit test\nheader nodes=3 dims=2 propensity=node counterfactual=yes\n\
node 0 1 1.5 1.5 0.25 0.3 0.1 2.0\nnode 1 0 0.25 1.0 0.25 0.6 -1.0 0.0\nnode 2 1 3.0 3.0 -1.0 0.5 1e-7 4.5\nedge 0 1\nedge 1 2\n";
        let ds = parse(text).unwrap();
        let mut out = Vec::new();
        write_dataset(&mut out, &ds).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn gzip_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let ds = crate::graph::tests::toy(5, &[(0, 1), (3, 4)]);
        let path = dir.path().join("toy.gnum.gz");
        save_dataset(&path, &ds).unwrap();
        let raw = std::fs::read(&path).unwrap();
        assert_eq!(raw[..2], [0x1f, 0x8b]);
        let back = load_dataset(&path, LoadOptions::default()).unwrap();
        assert_eq!(back, ds);
    }
}
