//! XML interchange format for thought graphs.
//!
//! The writer escapes all reserved characters, so any document it produces
//! parses with a standard XML parser as long as node texts went through
//! [`crate::corpus::sanitize_text`] (build does this unconditionally).
//! Semantic edges are bidirectional and written once per unordered pair;
//! the loader re-mirrors them.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;

use super::{BuildParams, GraphError, NodeData, NodeId, ThoughtGraph};
use crate::embedding::UnitVector;

const FORMAT_VERSION: u32 = 1;

pub fn save_graph_xml(graph: &ThoughtGraph, path: &Path) -> Result<(), GraphError> {
    let display = path.display().to_string();
    let io_err = |source| GraphError::Io {
        path: display.clone(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);

    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#).map_err(io_err)?;
    writeln!(
        w,
        r#"<thought-graph version="{}" tau-edge="{}" provider-id="{}" dim="{}" fingerprint="{}">"#,
        FORMAT_VERSION,
        graph.params().tau_edge,
        escape_attr(&graph.params().provider_id),
        graph.params().dim,
        escape_attr(graph.corpus_fingerprint()),
    )
    .map_err(io_err)?;

    for (idx, node) in graph.nodes().iter().enumerate() {
        writeln!(
            w,
            r#"  <node id="n{}" template-id="{}" step-index="{}" template-type="{}">"#,
            idx,
            escape_attr(&node.id.template_id),
            node.id.step_index,
            escape_attr(&node.template_type),
        )
        .map_err(io_err)?;
        for tag in &node.knowledge_tags {
            writeln!(w, "    <tag>{}</tag>", escape_text(tag)).map_err(io_err)?;
        }
        writeln!(w, "    <text>{}</text>", escape_text(&node.step_text)).map_err(io_err)?;
        let bytes: Vec<u8> = node
            .embedding
            .values()
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        writeln!(w, "    <embedding>{}</embedding>", BASE64.encode(bytes)).map_err(io_err)?;
        writeln!(w, "  </node>").map_err(io_err)?;
    }

    for (i, next) in (0..graph.node_count()).map(|i| (i, graph.sequential_next(i as u32))) {
        if let Some(j) = next {
            writeln!(
                w,
                r#"  <edge source="n{i}" target="n{j}" kind="sequential" weight="1"/>"#
            )
            .map_err(io_err)?;
        }
    }
    for (i, j, weight) in graph.semantic_pairs() {
        writeln!(
            w,
            r#"  <edge source="n{i}" target="n{j}" kind="semantic" weight="{weight}"/>"#
        )
        .map_err(io_err)?;
    }
    writeln!(w, "</thought-graph>").map_err(io_err)?;
    w.flush().map_err(io_err)?;
    Ok(())
}

pub fn load_graph_xml(path: &Path) -> Result<ThoughtGraph, GraphError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: display.clone(),
        source,
    })?;
    parse_graph_xml(&text, &display)
}

fn parse_graph_xml(text: &str, path: &str) -> Result<ThoughtGraph, GraphError> {
    let mut cursor = Cursor::new(text.as_bytes(), path);
    cursor.skip_prolog()?;

    let root = cursor.read_open_tag()?;
    if root.name != "thought-graph" {
        return Err(cursor.corrupt(format!("unexpected root element <{}>", root.name)));
    }
    let version: u32 = root.parse_attr(&cursor, "version")?;
    if version != FORMAT_VERSION {
        return Err(GraphError::VersionMismatch {
            path: path.to_string(),
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let params = BuildParams {
        tau_edge: root.parse_attr(&cursor, "tau-edge")?,
        provider_id: root.require_attr(&cursor, "provider-id")?,
        dim: root.parse_attr(&cursor, "dim")?,
    };
    let fingerprint = root.require_attr(&cursor, "fingerprint")?;

    let mut nodes: Vec<NodeData> = Vec::new();
    let mut sequential: Vec<(u32, u32)> = Vec::new();
    let mut semantic: Vec<(u32, u32, f64)> = Vec::new();

    loop {
        match cursor.next_tag()? {
            TagEvent::Close(name) if name == "thought-graph" => break,
            TagEvent::Open(tag) if tag.name == "node" => {
                let idx = parse_node_ref(&cursor, &tag.require_attr(&cursor, "id")?)?;
                if idx as usize != nodes.len() {
                    return Err(cursor.corrupt(format!(
                        "node n{idx} out of order (expected n{})",
                        nodes.len()
                    )));
                }
                if tag.self_closing {
                    return Err(cursor.corrupt("node element lacks text and embedding".into()));
                }
                nodes.push(read_node_body(&mut cursor, &tag, params.dim)?);
            }
            TagEvent::Open(tag) if tag.name == "edge" => {
                if !tag.self_closing {
                    cursor.expect_close("edge")?;
                }
                let source = parse_node_ref(&cursor, &tag.require_attr(&cursor, "source")?)?;
                let target = parse_node_ref(&cursor, &tag.require_attr(&cursor, "target")?)?;
                let kind = tag.require_attr(&cursor, "kind")?;
                let weight: f64 = tag.parse_attr(&cursor, "weight")?;
                match kind.as_str() {
                    "sequential" => {
                        if weight != 1.0 {
                            return Err(
                                cursor.corrupt("sequential edge with weight != 1".into())
                            );
                        }
                        sequential.push((source, target));
                    }
                    "semantic" => semantic.push((source, target, weight)),
                    other => {
                        return Err(cursor.corrupt(format!("unknown edge kind {other:?}")))
                    }
                }
            }
            TagEvent::Open(tag) => {
                return Err(cursor.corrupt(format!("unexpected element <{}>", tag.name)))
            }
            TagEvent::Close(name) => {
                return Err(cursor.corrupt(format!("unexpected closing tag </{name}>")))
            }
        }
    }
    cursor.expect_eof()?;

    let graph = ThoughtGraph::from_parts(nodes, semantic, params, fingerprint)?;

    // The file's sequential edges must be exactly the structurally implied set.
    let mut expected: Vec<(u32, u32)> = Vec::new();
    for i in 0..graph.node_count() as u32 {
        if let Some(j) = graph.sequential_next(i) {
            expected.push((i, j));
        }
    }
    let mut found = sequential;
    found.sort_unstable();
    expected.sort_unstable();
    if found != expected {
        return Err(GraphError::Corrupt {
            path: path.to_string(),
            message: "sequential edges disagree with node layout".to_string(),
        });
    }
    Ok(graph)
}

fn read_node_body(
    cursor: &mut Cursor<'_>,
    node_tag: &Tag,
    dim: usize,
) -> Result<NodeData, GraphError> {
    let template_id = node_tag.require_attr(cursor, "template-id")?;
    let step_index: u32 = node_tag.parse_attr(cursor, "step-index")?;
    let template_type = node_tag.require_attr(cursor, "template-type")?;

    let mut tags = Vec::new();
    let mut step_text: Option<String> = None;
    let mut embedding: Option<UnitVector> = None;
    loop {
        match cursor.next_tag()? {
            TagEvent::Close(name) if name == "node" => break,
            TagEvent::Open(tag) => {
                let content = if tag.self_closing {
                    String::new()
                } else {
                    let text = cursor.read_text()?;
                    cursor.expect_close(&tag.name)?;
                    text
                };
                match tag.name.as_str() {
                    "tag" => tags.push(content),
                    "text" => step_text = Some(content),
                    "embedding" => {
                        let bytes = BASE64
                            .decode(content.trim())
                            .map_err(|e| cursor.corrupt(format!("bad embedding base64: {e}")))?;
                        if bytes.len() != dim * 4 {
                            return Err(cursor.corrupt(format!(
                                "embedding has {} bytes, expected {}",
                                bytes.len(),
                                dim * 4
                            )));
                        }
                        let values: Vec<f32> = bytes
                            .chunks_exact(4)
                            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                            .collect();
                        embedding = Some(UnitVector::from_stored(values).map_err(|e| {
                            cursor.corrupt(format!("embedding not unit norm: {e}"))
                        })?);
                    }
                    other => {
                        return Err(cursor.corrupt(format!("unexpected element <{other}>")))
                    }
                }
            }
            TagEvent::Close(name) => {
                return Err(cursor.corrupt(format!("unexpected closing tag </{name}>")))
            }
        }
    }
    Ok(NodeData {
        id: NodeId::new(template_id, step_index),
        step_text: step_text.ok_or_else(|| cursor.corrupt("node missing <text>".into()))?,
        template_type,
        knowledge_tags: tags,
        embedding: embedding
            .ok_or_else(|| cursor.corrupt("node missing <embedding>".into()))?,
    })
}

fn parse_node_ref(cursor: &Cursor<'_>, value: &str) -> Result<u32, GraphError> {
    value
        .strip_prefix('n')
        .and_then(|rest| rest.parse().ok())
        .ok_or_else(|| cursor.corrupt(format!("bad node reference {value:?}")))
}

pub(crate) fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\r' => out.push_str("&#13;"),
            _ => out.push(c),
        }
    }
    out
}

fn escape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\n' => out.push_str("&#10;"),
            '\t' => out.push_str("&#9;"),
            '\r' => out.push_str("&#13;"),
            _ => out.push(c),
        }
    }
    out
}

struct Tag {
    name: String,
    attrs: Vec<(String, String)>,
    self_closing: bool,
}

impl Tag {
    fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    fn require_attr(&self, cursor: &Cursor<'_>, name: &str) -> Result<String, GraphError> {
        self.attr(name)
            .map(str::to_string)
            .ok_or_else(|| cursor.corrupt(format!("<{}> missing attribute {name:?}", self.name)))
    }

    fn parse_attr<T: std::str::FromStr>(
        &self,
        cursor: &Cursor<'_>,
        name: &str,
    ) -> Result<T, GraphError> {
        self.require_attr(cursor, name)?.parse().map_err(|_| {
            cursor.corrupt(format!("<{}> attribute {name:?} is malformed", self.name))
        })
    }
}

enum TagEvent {
    Open(Tag),
    Close(String),
}

/// Byte cursor over a well-formed subset of XML: prolog, comments,
/// elements, attributes, character data, and the five named entities plus
/// numeric character references. Anything else is rejected.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], path: &'a str) -> Self {
        Cursor { bytes, pos: 0, path }
    }

    fn corrupt(&self, message: String) -> GraphError {
        GraphError::Corrupt {
            path: self.path.to_string(),
            message: format!("{message} (byte {})", self.pos),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn skip_prolog(&mut self) -> Result<(), GraphError> {
        self.skip_ws();
        if self.bytes[self.pos..].starts_with(b"<?xml") {
            match self.bytes[self.pos..].windows(2).position(|w| w == b"?>") {
                Some(end) => self.pos += end + 2,
                None => return Err(self.corrupt("unterminated XML declaration".into())),
            }
        }
        Ok(())
    }

    fn skip_misc(&mut self) -> Result<(), GraphError> {
        loop {
            self.skip_ws();
            if self.bytes[self.pos..].starts_with(b"<!--") {
                match self.bytes[self.pos..].windows(3).position(|w| w == b"-->") {
                    Some(end) => self.pos += end + 3,
                    None => return Err(self.corrupt("unterminated comment".into())),
                }
            } else {
                return Ok(());
            }
        }
    }

    /// Next tag event, skipping whitespace-only character data and comments.
    fn next_tag(&mut self) -> Result<TagEvent, GraphError> {
        self.skip_misc()?;
        if !matches!(self.bytes.get(self.pos), Some(b'<')) {
            return Err(self.corrupt("expected a tag".into()));
        }
        if self.bytes[self.pos..].starts_with(b"</") {
            self.pos += 2;
            let name = self.read_name()?;
            self.skip_ws();
            if self.bytes.get(self.pos) != Some(&b'>') {
                return Err(self.corrupt("malformed closing tag".into()));
            }
            self.pos += 1;
            Ok(TagEvent::Close(name))
        } else {
            Ok(TagEvent::Open(self.read_open_tag_inner()?))
        }
    }

    fn read_open_tag(&mut self) -> Result<Tag, GraphError> {
        self.skip_misc()?;
        if self.bytes.get(self.pos) != Some(&b'<') {
            return Err(self.corrupt("expected an opening tag".into()));
        }
        self.read_open_tag_inner()
    }

    fn read_open_tag_inner(&mut self) -> Result<Tag, GraphError> {
        self.pos += 1; // consume '<'
        let name = self.read_name()?;
        let mut attrs = Vec::new();
        loop {
            self.skip_ws();
            match self.bytes.get(self.pos) {
                Some(b'>') => {
                    self.pos += 1;
                    return Ok(Tag {
                        name,
                        attrs,
                        self_closing: false,
                    });
                }
                Some(b'/') => {
                    if self.bytes.get(self.pos + 1) != Some(&b'>') {
                        return Err(self.corrupt("malformed self-closing tag".into()));
                    }
                    self.pos += 2;
                    return Ok(Tag {
                        name,
                        attrs,
                        self_closing: true,
                    });
                }
                Some(_) => {
                    let key = self.read_name()?;
                    self.skip_ws();
                    if self.bytes.get(self.pos) != Some(&b'=') {
                        return Err(self.corrupt(format!("attribute {key:?} missing '='")));
                    }
                    self.pos += 1;
                    self.skip_ws();
                    let quote = match self.bytes.get(self.pos) {
                        Some(&q @ (b'"' | b'\'')) => q,
                        _ => return Err(self.corrupt("attribute value must be quoted".into())),
                    };
                    self.pos += 1;
                    let start = self.pos;
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != quote {
                        if self.bytes[self.pos] == b'<' {
                            return Err(self.corrupt("raw '<' inside attribute value".into()));
                        }
                        self.pos += 1;
                    }
                    if self.pos >= self.bytes.len() {
                        return Err(self.corrupt("unterminated attribute value".into()));
                    }
                    let raw = &self.bytes[start..self.pos];
                    self.pos += 1;
                    attrs.push((key, self.decode_entities(raw)?));
                }
                None => return Err(self.corrupt("unexpected end of file in tag".into())),
            }
        }
    }

    fn read_name(&mut self) -> Result<String, GraphError> {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && matches!(self.bytes[self.pos], b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9' | b'-' | b'_' | b':' | b'.')
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.corrupt("expected a name".into()));
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    /// Character data up to the next '<', with entities decoded.
    fn read_text(&mut self) -> Result<String, GraphError> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos] != b'<' {
            self.pos += 1;
        }
        let raw = &self.bytes[start..self.pos];
        self.decode_entities(raw)
    }

    fn expect_close(&mut self, name: &str) -> Result<(), GraphError> {
        match self.next_tag()? {
            TagEvent::Close(n) if n == name => Ok(()),
            _ => Err(self.corrupt(format!("expected </{name}>"))),
        }
    }

    fn expect_eof(&mut self) -> Result<(), GraphError> {
        self.skip_misc()?;
        if self.pos != self.bytes.len() {
            return Err(self.corrupt("trailing content after root element".into()));
        }
        Ok(())
    }

    fn decode_entities(&self, raw: &[u8]) -> Result<String, GraphError> {
        let text = std::str::from_utf8(raw)
            .map_err(|_| self.corrupt("invalid utf-8 in document".into()))?;
        if !text.contains('&') {
            return Ok(text.to_string());
        }
        let mut out = String::with_capacity(text.len());
        let mut rest = text;
        while let Some(amp) = rest.find('&') {
            out.push_str(&rest[..amp]);
            let entity_rest = &rest[amp..];
            let semi = entity_rest
                .find(';')
                .ok_or_else(|| self.corrupt("unterminated entity".into()))?;
            let entity = &entity_rest[1..semi];
            match entity {
                "amp" => out.push('&'),
                "lt" => out.push('<'),
                "gt" => out.push('>'),
                "quot" => out.push('"'),
                "apos" => out.push('\''),
                _ => {
                    let code = if let Some(hex) = entity.strip_prefix("#x") {
                        u32::from_str_radix(hex, 16).ok()
                    } else if let Some(dec) = entity.strip_prefix('#') {
                        dec.parse().ok()
                    } else {
                        None
                    };
                    match code.and_then(char::from_u32) {
                        Some(c) => out.push(c),
                        None => return Err(self.corrupt(format!("unknown entity &{entity};"))),
                    }
                }
            }
            rest = &entity_rest[semi + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}
