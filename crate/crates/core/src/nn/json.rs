//! Text serialization of networks. Numbers are written with 17 significant
//! digits so that a write/read cycle reproduces every weight bit for bit.

use std::fmt::Write as _;

use serde::Deserialize;
use serde_json::Value;

use super::net::{Layer, ReluNet};
use super::sparse::SparseMatrix;
use crate::error::{invalid, Result};

fn num(out: &mut String, v: f64) {
    if v == 0.0 {
        out.push('0');
    } else {
        let _ = write!(out, "{v:.16e}");
    }
}

fn num_list(out: &mut String, vals: impl IntoIterator<Item = f64>) {
    out.push('[');
    for (k, v) in vals.into_iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        num(out, v);
    }
    out.push(']');
}

/// Serializes `net`; an optional `header` object is emitted under `"header"`.
pub fn to_json(net: &ReluNet, header: Option<&Value>) -> String {
    let mut s = String::new();
    s.push('{');
    if let Some(h) = header {
        let _ = write!(s, "\"header\":{},", h);
    }
    let _ = write!(
        s,
        "\"input_dim\":{},\"output_dim\":{},\"layers\":[",
        net.input_dim(),
        net.output_dim()
    );
    for (k, l) in net.layers().iter().enumerate() {
        if k > 0 {
            s.push(',');
        }
        let _ = write!(s, "\n{{\"rows\":{},\"cols\":{},\"triplets\":[", l.weights.rows(), l.weights.cols());
        for (t, &(i, j, v)) in l.weights.entries().iter().enumerate() {
            if t > 0 {
                s.push(',');
            }
            let _ = write!(s, "[{i},{j},");
            num(&mut s, v);
            s.push(']');
        }
        s.push_str("],\"bias\":");
        num_list(&mut s, l.bias.iter().copied());
        s.push('}');
    }
    s.push_str("\n]}\n");
    s
}

#[derive(Deserialize)]
struct LayerDoc {
    rows: usize,
    cols: usize,
    triplets: Vec<(usize, usize, f64)>,
    bias: Vec<f64>,
}

#[derive(Deserialize)]
struct NetDoc {
    #[serde(default)]
    header: Option<Value>,
    input_dim: usize,
    output_dim: usize,
    layers: Vec<LayerDoc>,
}

/// Parses a network document, returning the network and its header if any.
pub fn from_json(text: &str) -> Result<(ReluNet, Option<Value>)> {
    let doc: NetDoc = serde_json::from_str(text)?;
    let layers = doc
        .layers
        .into_iter()
        .map(|l| Layer::new(SparseMatrix::from_triplets(l.rows, l.cols, l.triplets)?, l.bias))
        .collect::<Result<Vec<_>>>()?;
    let net = ReluNet::new(layers)?;
    if net.input_dim() != doc.input_dim || net.output_dim() != doc.output_dim {
        return Err(invalid("declared dimensions disagree with the layers"));
    }
    Ok((net, doc.header))
}
