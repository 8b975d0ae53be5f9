//! Compact versioned binary cache for fast graph reload. Sequential edges
//! are structurally implied by the node layout and are re-derived on load;
//! semantic edges are stored once per unordered pair.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{BuildParams, GraphError, NodeData, NodeId, ThoughtGraph};
use crate::embedding::UnitVector;

const MAGIC: &[u8; 4] = b"RTGB";
const VERSION: u32 = 1;

pub fn save_graph_binary(graph: &ThoughtGraph, path: &Path) -> Result<(), GraphError> {
    let display = path.display().to_string();
    let io_err = |source| GraphError::Io {
        path: display.clone(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);

    w.write_all(MAGIC).map_err(io_err)?;
    w.write_u32::<LittleEndian>(VERSION).map_err(io_err)?;
    w.write_f64::<LittleEndian>(graph.params().tau_edge)
        .map_err(io_err)?;
    write_str(&mut w, &graph.params().provider_id).map_err(io_err)?;
    w.write_u32::<LittleEndian>(graph.params().dim as u32)
        .map_err(io_err)?;
    write_str(&mut w, graph.corpus_fingerprint()).map_err(io_err)?;

    w.write_u32::<LittleEndian>(graph.node_count() as u32)
        .map_err(io_err)?;
    for node in graph.nodes() {
        write_str(&mut w, &node.id.template_id).map_err(io_err)?;
        w.write_u32::<LittleEndian>(node.id.step_index).map_err(io_err)?;
        write_str(&mut w, &node.step_text).map_err(io_err)?;
        write_str(&mut w, &node.template_type).map_err(io_err)?;
        w.write_u32::<LittleEndian>(node.knowledge_tags.len() as u32)
            .map_err(io_err)?;
        for tag in &node.knowledge_tags {
            write_str(&mut w, tag).map_err(io_err)?;
        }
        for &v in node.embedding.values() {
            w.write_f32::<LittleEndian>(v).map_err(io_err)?;
        }
    }

    let pairs = graph.semantic_pairs();
    w.write_u64::<LittleEndian>(pairs.len() as u64).map_err(io_err)?;
    for (i, j, weight) in pairs {
        w.write_u32::<LittleEndian>(i).map_err(io_err)?;
        w.write_u32::<LittleEndian>(j).map_err(io_err)?;
        w.write_f64::<LittleEndian>(weight).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

pub fn load_graph_binary(path: &Path) -> Result<ThoughtGraph, GraphError> {
    let display = path.display().to_string();
    let io_err = |source| GraphError::Io {
        path: display.clone(),
        source,
    };
    let corrupt = |message: String| GraphError::Corrupt {
        path: display.clone(),
        message,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(corrupt("bad magic".to_string()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io_err)?;
    if version != VERSION {
        return Err(GraphError::VersionMismatch {
            path: display.clone(),
            found: version,
            expected: VERSION,
        });
    }
    let tau_edge = r.read_f64::<LittleEndian>().map_err(io_err)?;
    let provider_id = read_str(&mut r).map_err(io_err)?;
    let dim = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let fingerprint = read_str(&mut r).map_err(io_err)?;
    if dim == 0 || dim > 1 << 20 {
        return Err(corrupt(format!("implausible dimension {dim}")));
    }

    let node_count = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let mut nodes = Vec::with_capacity(node_count);
    for _ in 0..node_count {
        let template_id = read_str(&mut r).map_err(io_err)?;
        let step_index = r.read_u32::<LittleEndian>().map_err(io_err)?;
        let step_text = read_str(&mut r).map_err(io_err)?;
        let template_type = read_str(&mut r).map_err(io_err)?;
        let tag_count = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
        if tag_count > 1 << 16 {
            return Err(corrupt("implausible tag count".to_string()));
        }
        let mut knowledge_tags = Vec::with_capacity(tag_count);
        for _ in 0..tag_count {
            knowledge_tags.push(read_str(&mut r).map_err(io_err)?);
        }
        let mut values = vec![0.0f32; dim];
        r.read_f32_into::<LittleEndian>(&mut values).map_err(io_err)?;
        let embedding = UnitVector::from_stored(values)
            .map_err(|e| corrupt(format!("embedding not unit norm: {e}")))?;
        nodes.push(NodeData {
            id: NodeId::new(template_id, step_index),
            step_text,
            template_type,
            knowledge_tags,
            embedding,
        });
    }

    let pair_count = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
    let mut pairs = Vec::with_capacity(pair_count.min(1 << 24));
    for _ in 0..pair_count {
        let i = r.read_u32::<LittleEndian>().map_err(io_err)?;
        let j = r.read_u32::<LittleEndian>().map_err(io_err)?;
        let weight = r.read_f64::<LittleEndian>().map_err(io_err)?;
        pairs.push((i, j, weight));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(io_err)? != 0 {
        return Err(corrupt("trailing bytes after graph data".to_string()));
    }

    ThoughtGraph::from_parts(
        nodes,
        pairs,
        BuildParams {
            tau_edge,
            provider_id,
            dim,
        },
        fingerprint,
    )
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> std::io::Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    if len > 1 << 24 {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "string length out of range",
        ));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf)
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidData, "invalid utf-8"))
}
