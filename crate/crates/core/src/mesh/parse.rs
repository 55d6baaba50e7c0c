//! Readers and writers for MeSH descriptor files.
//!
//! Two distribution formats are understood: the ASCII `d20XX.bin` layout
//! (`*NEWRECORD`-delimited `FIELD = value` lines) and the descriptor XML
//! (`DescriptorRecordSet`). Both feed the same [`MeshDescriptor`] model.
//! A line-delimited JSON form is used for fixtures.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use quick_xml::events::Event;
use quick_xml::Reader;

use super::{MeshDescriptor, MeshError, MeshOntology, TreeNumber};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    AsciiBin,
    Xml,
}

impl MeshFormat {
    /// Guesses the format from the first bytes of a file.
    pub fn sniff(head: &[u8]) -> Result<Self, MeshError> {
        let text = String::from_utf8_lossy(head);
        let trimmed = text.trim_start_matches('\u{feff}').trim_start();
        if trimmed.starts_with('<') {
            Ok(MeshFormat::Xml)
        } else if trimmed.starts_with("*NEWRECORD") {
            Ok(MeshFormat::AsciiBin)
        } else {
            Err(MeshError::UnknownFormat)
        }
    }
}

impl FromStr for MeshFormat {
    type Err = MeshError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ascii-bin" | "ascii" | "bin" => Ok(MeshFormat::AsciiBin),
            "xml" => Ok(MeshFormat::Xml),
            _ => Err(MeshError::UnknownFormat),
        }
    }
}

pub fn parse_mesh<R: Read>(source: R, format: MeshFormat) -> Result<MeshOntology, MeshError> {
    let records = match format {
        MeshFormat::AsciiBin => parse_ascii(BufReader::new(source))?,
        MeshFormat::Xml => parse_xml(BufReader::new(source))?,
    };
    MeshOntology::from_descriptors(records)
}

/// Loads a MeSH file, picking the reader from the extension (`.bin`, `.xml`,
/// `.jsonl`) or from the leading bytes. The file name is recorded as the
/// ontology source.
pub fn load_mesh_file(path: &Path) -> Result<MeshOntology, MeshError> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let ontology = match ext.as_deref() {
        Some("jsonl") => read_canonical(BufReader::new(File::open(path)?))?,
        Some("bin") => parse_mesh(File::open(path)?, MeshFormat::AsciiBin)?,
        Some("xml") => parse_mesh(File::open(path)?, MeshFormat::Xml)?,
        _ => {
            let mut head = [0u8; 512];
            let mut f = File::open(path)?;
            let n = f.read(&mut head)?;
            let format = MeshFormat::sniff(&head[..n])?;
            parse_mesh(File::open(path)?, format)?
        }
    };
    Ok(ontology.with_source(name))
}

#[derive(Default)]
struct Partial {
    ui: Option<String>,
    name: Option<String>,
    trees: Vec<String>,
    skip: bool,
}

impl Partial {
    fn finish(self, record: usize) -> Result<Option<MeshDescriptor>, MeshError> {
        if self.skip {
            return Ok(None);
        }
        let ui = self
            .ui
            .filter(|u| !u.is_empty())
            .ok_or_else(|| MeshError::MalformedRecord { record, reason: "missing UI".into() })?;
        let name = self
            .name
            .filter(|n| !n.is_empty())
            .ok_or_else(|| MeshError::MalformedRecord { record, reason: format!("{ui}: missing MH") })?;
        let trees = self.trees.iter().map(|t| TreeNumber::parse(t)).collect::<Result<Vec<_>, _>>()?;
        Ok(Some(MeshDescriptor::new(ui, name, trees)))
    }
}

fn parse_ascii<R: BufRead>(reader: R) -> Result<Vec<MeshDescriptor>, MeshError> {
    let mut out = Vec::new();
    let mut current: Option<Partial> = None;
    let mut record = 0;
    for line in reader.lines() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim() == "*NEWRECORD" {
            if let Some(p) = current.take() {
                out.extend(p.finish(record)?);
            }
            record += 1;
            current = Some(Partial::default());
            continue;
        }
        let Some((field, value)) = line.split_once(" = ") else {
            continue;
        };
        let Some(p) = current.as_mut() else {
            return Err(MeshError::UnknownFormat);
        };
        let value = value.trim().to_string();
        match field.trim() {
            "MH" => p.name = Some(value),
            "UI" => p.ui = Some(value),
            "MN" => p.trees.push(value),
            // qualifier and supplementary records share the layout
            "RECTYPE" => p.skip = value != "D",
            _ => {}
        }
    }
    if let Some(p) = current.take() {
        out.extend(p.finish(record)?);
    }
    Ok(out)
}

fn parse_xml<R: BufRead>(reader: R) -> Result<Vec<MeshDescriptor>, MeshError> {
    let mut xml = Reader::from_reader(reader);
    xml.config_mut().trim_text(true);
    let xml_err = |e: quick_xml::Error| MeshError::Xml(e.to_string());

    let mut out = Vec::new();
    let mut stack: Vec<String> = Vec::new();
    let mut current: Option<Partial> = None;
    let mut record = 0;
    let mut buf = Vec::new();
    loop {
        match xml.read_event_into(&mut buf).map_err(xml_err)? {
            Event::Start(e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                if name == "DescriptorRecord" {
                    record += 1;
                    current = Some(Partial::default());
                }
                stack.push(name);
            }
            Event::End(_) => {
                if stack.pop().as_deref() == Some("DescriptorRecord") {
                    if let Some(p) = current.take() {
                        out.extend(p.finish(record)?);
                    }
                }
            }
            Event::Text(t) => {
                let text = t.unescape().map_err(xml_err)?.trim().to_string();
                let Some(p) = current.as_mut() else { continue };
                let path: Vec<&str> = stack.iter().map(String::as_str).collect();
                match path.as_slice() {
                    [.., "DescriptorRecord", "DescriptorUI"] => p.ui = Some(text),
                    [.., "DescriptorRecord", "DescriptorName", "String"] => p.name = Some(text),
                    [.., "DescriptorRecord", "TreeNumberList", "TreeNumber"] => p.trees.push(text),
                    _ => {}
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    Ok(out)
}

/// Canonical fixture form: one `{ui, name, tree_numbers}` object per line,
/// ordered by UI.
pub fn write_canonical<W: Write>(ontology: &MeshOntology, mut w: W) -> Result<(), MeshError> {
    for d in ontology.descriptors() {
        serde_json::to_writer(&mut w, d).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_canonical<R: BufRead>(reader: R) -> Result<MeshOntology, MeshError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d: MeshDescriptor = serde_json::from_str(&line)
            .map_err(|e| MeshError::MalformedRecord { record: i + 1, reason: e.to_string() })?;
        records.push(d);
    }
    MeshOntology::from_descriptors(records)
}

/// Writes the ASCII distribution layout (only the MH, MN and UI fields).
pub fn write_ascii_bin<W: Write>(ontology: &MeshOntology, mut w: W) -> Result<(), MeshError> {
    for d in ontology.descriptors() {
        writeln!(w, "*NEWRECORD")?;
        writeln!(w, "RECTYPE = D")?;
        writeln!(w, "MH = {}", d.name)?;
        for t in &d.tree_numbers {
            writeln!(w, "MN = {t}")?;
        }
        writeln!(w, "UI = {}", d.ui)?;
        writeln!(w)?;
    }
    Ok(())
}
