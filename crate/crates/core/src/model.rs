//! Engineering-system meta-architecture: operands, processes, resources and
//! capabilities, read from a section-based text document.
//!
//! # Document format
//!
//! ```text
//! # comment
//! [metadata]
//! key = value
//!
//! [operands]
//! id | name | unit
//!
//! [processes]
//! id | name | transformation | refined-transportation
//!
//! [resources]
//! id | name | transformation | independent-buffer | transportation [| location]
//!
//! [capabilities]
//! id | resource | process | operand @ buffer : rate unit ; operand @ buffer : rate unit ...
//! ```
//!
//! Ids are made of ASCII letters, digits, `_`, `-` and `.`. A flow rate is a
//! signed real per unit firing of the capability: negative rates pull the
//! operand from the buffer, positive rates inject it. Declaration order is
//! significant: it fixes the row and column order of every matrix built from
//! the model.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The bundled grid-to-hydrogen model document.
pub const AUSTRALIA_H2: &str = include_str!("../fixtures/australia-h2.model");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: {kind} \"{id}\" is not declared")]
    DanglingReference {
        line: usize,
        kind: &'static str,
        id: String,
    },
    #[error("line {line}: duplicate {kind} id \"{id}\"")]
    DuplicateId {
        line: usize,
        kind: &'static str,
        id: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessKind {
    Transformation,
    RefinedTransportation,
}

impl ProcessKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProcessKind::Transformation => "transformation",
            ProcessKind::RefinedTransportation => "refined-transportation",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "transformation" => Some(ProcessKind::Transformation),
            "refined-transportation" => Some(ProcessKind::RefinedTransportation),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResourceKind {
    Transformation,
    IndependentBuffer,
    Transportation,
}

impl ResourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ResourceKind::Transformation => "transformation",
            ResourceKind::IndependentBuffer => "independent-buffer",
            ResourceKind::Transportation => "transportation",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "transformation" => Some(ResourceKind::Transformation),
            "independent-buffer" => Some(ResourceKind::IndependentBuffer),
            "transportation" => Some(ResourceKind::Transportation),
            _ => None,
        }
    }

    /// Buffers are resources with a fixed location: transformation resources
    /// and independent buffers.
    pub fn is_buffer(self) -> bool {
        !matches!(self, ResourceKind::Transportation)
    }

    /// Transformation processes need a transformation resource; any resource
    /// may carry out a refined-transportation process.
    pub fn permits(self, process: ProcessKind) -> bool {
        match process {
            ProcessKind::Transformation => self == ResourceKind::Transformation,
            ProcessKind::RefinedTransportation => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Operand {
    pub id: String,
    pub name: String,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessDef {
    pub id: String,
    pub name: String,
    pub kind: ProcessKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resource {
    pub id: String,
    pub name: String,
    pub kind: ResourceKind,
    pub location: Option<String>,
}

/// One operand flow of a capability, per unit firing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub operand: String,
    pub buffer: String,
    pub rate: f64,
    pub unit: String,
}

/// "Resource does process": one column of the incidence matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capability {
    pub id: String,
    pub resource: String,
    pub process: String,
    pub flows: Vec<Flow>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SystemModel {
    pub operands: Vec<Operand>,
    pub processes: Vec<ProcessDef>,
    pub resources: Vec<Resource>,
    pub capabilities: Vec<Capability>,
    pub metadata: BTreeMap<String, String>,
}

impl SystemModel {
    pub fn australia_h2() -> SystemModel {
        parse_system_model(AUSTRALIA_H2).expect("bundled model document is valid")
    }

    pub fn operand(&self, id: &str) -> Option<&Operand> {
        self.operands.iter().find(|o| o.id == id)
    }

    pub fn process(&self, id: &str) -> Option<&ProcessDef> {
        self.processes.iter().find(|p| p.id == id)
    }

    pub fn resource(&self, id: &str) -> Option<&Resource> {
        self.resources.iter().find(|r| r.id == id)
    }

    pub fn capability(&self, id: &str) -> Option<&Capability> {
        self.capabilities.iter().find(|c| c.id == id)
    }

    pub fn operand_index(&self, id: &str) -> Option<usize> {
        self.operands.iter().position(|o| o.id == id)
    }

    pub fn capability_index(&self, id: &str) -> Option<usize> {
        self.capabilities.iter().position(|c| c.id == id)
    }

    /// Position of `id` within [`enumerate_buffers`] order.
    pub fn buffer_index(&self, id: &str) -> Option<usize> {
        enumerate_buffers(self).iter().position(|b| b.id == id)
    }

    /// Serialize back to the document format. Parsing the result yields a
    /// structurally identical model.
    pub fn to_document(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.metadata.is_empty() {
            writeln!(f, "[metadata]")?;
            for (k, v) in &self.metadata {
                writeln!(f, "{k} = {v}")?;
            }
            writeln!(f)?;
        }
        writeln!(f, "[operands]")?;
        for o in &self.operands {
            writeln!(f, "{} | {} | {}", o.id, o.name, o.unit)?;
        }
        writeln!(f, "\n[processes]")?;
        for p in &self.processes {
            writeln!(f, "{} | {} | {}", p.id, p.name, p.kind.as_str())?;
        }
        writeln!(f, "\n[resources]")?;
        for r in &self.resources {
            write!(f, "{} | {} | {}", r.id, r.name, r.kind.as_str())?;
            if let Some(loc) = &r.location {
                write!(f, " | {loc}")?;
            }
            writeln!(f)?;
        }
        writeln!(f, "\n[capabilities]")?;
        for c in &self.capabilities {
            write!(f, "{} | {} | {} |", c.id, c.resource, c.process)?;
            for (i, fl) in c.flows.iter().enumerate() {
                let sep = if i == 0 { " " } else { " ; " };
                write!(
                    f,
                    "{sep}{} @ {} : {} {}",
                    fl.operand, fl.buffer, fl.rate, fl.unit
                )?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Metadata,
    Operands,
    Processes,
    Resources,
    Capabilities,
}

/// A field of a declaration line, with its 1-based column.
struct Field<'a> {
    text: &'a str,
    column: usize,
}

fn split_fields(line: &str, sep: char) -> Vec<Field<'_>> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, ch) in line.char_indices().chain(std::iter::once((line.len(), sep))) {
        if ch == sep {
            let raw = &line[start..i];
            let lead = raw.len() - raw.trim_start().len();
            out.push(Field {
                text: raw.trim(),
                column: start + lead + 1,
            });
            start = i + ch.len_utf8();
        }
    }
    out
}

fn is_valid_id(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ModelError {
    ModelError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn expect_id(field: &Field<'_>, line: usize, what: &str) -> Result<String, ModelError> {
    if is_valid_id(field.text) {
        Ok(field.text.to_string())
    } else if field.text.is_empty() {
        Err(syntax(line, field.column, format!("missing {what}")))
    } else {
        Err(syntax(
            line,
            field.column,
            format!("invalid {what} \"{}\"", field.text),
        ))
    }
}

fn parse_flow(field: &Field<'_>, line: usize) -> Result<Flow, ModelError> {
    let text = field.text;
    let col = field.column;
    let (lhs, rhs) = text
        .split_once(':')
        .ok_or_else(|| syntax(line, col, format!("flow \"{text}\" lacks ':'")))?;
    let (operand, buffer) = lhs
        .split_once('@')
        .ok_or_else(|| syntax(line, col, format!("flow \"{text}\" lacks '@'")))?;
    let operand = operand.trim();
    let buffer = buffer.trim();
    if !is_valid_id(operand) {
        return Err(syntax(line, col, format!("invalid operand id \"{operand}\"")));
    }
    if !is_valid_id(buffer) {
        return Err(syntax(line, col, format!("invalid buffer id \"{buffer}\"")));
    }
    let mut parts = rhs.split_whitespace();
    let rate_text = parts
        .next()
        .ok_or_else(|| syntax(line, col, format!("flow \"{text}\" lacks a rate")))?;
    let rate: f64 = rate_text
        .parse()
        .ok()
        .filter(|r: &f64| r.is_finite())
        .ok_or_else(|| syntax(line, col, format!("invalid rate \"{rate_text}\"")))?;
    let unit = parts
        .next()
        .ok_or_else(|| syntax(line, col, format!("flow \"{text}\" lacks a unit")))?;
    if parts.next().is_some() {
        return Err(syntax(line, col, format!("trailing text in flow \"{text}\"")));
    }
    Ok(Flow {
        operand: operand.to_string(),
        buffer: buffer.to_string(),
        rate,
        unit: unit.to_string(),
    })
}

/// Parse a model document. Cross references are resolved after all sections
/// are read, so sections may appear in any order.
pub fn parse_system_model(text: &str) -> Result<SystemModel, ModelError> {
    let mut model = SystemModel::default();
    let mut section: Option<Section> = None;
    // line numbers of each declaration, for reference errors
    let mut cap_lines = Vec::new();
    let mut seen: HashMap<&'static str, HashSet<String>> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('[') {
            let col = line.find('[').unwrap_or(0) + 1;
            let name = trimmed
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| syntax(line_no, col, "unterminated section header"))?;
            section = Some(match name.trim() {
                "metadata" => Section::Metadata,
                "operands" => Section::Operands,
                "processes" => Section::Processes,
                "resources" => Section::Resources,
                "capabilities" => Section::Capabilities,
                other => {
                    return Err(syntax(line_no, col, format!("unknown section [{other}]")));
                }
            });
            continue;
        }
        let Some(sec) = section else {
            return Err(syntax(line_no, 1, "declaration outside of any section"));
        };

        if sec == Section::Metadata {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| syntax(line_no, 1, "metadata line must be `key = value`"))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(syntax(line_no, 1, "empty metadata key"));
            }
            model.metadata.insert(k.to_string(), v.trim().to_string());
            continue;
        }

        let fields = split_fields(line, '|');
        let mut register = |kind: &'static str, id: &str| -> Result<(), ModelError> {
            if !seen.entry(kind).or_default().insert(id.to_string()) {
                return Err(ModelError::DuplicateId {
                    line: line_no,
                    kind,
                    id: id.to_string(),
                });
            }
            Ok(())
        };
        let arity = |min: usize, max: usize| -> Result<(), ModelError> {
            if fields.len() < min || fields.len() > max {
                let expected = if min == max {
                    format!("{min}")
                } else {
                    format!("{min} to {max}")
                };
                return Err(syntax(
                    line_no,
                    1,
                    format!("expected {expected} '|'-separated fields, found {}", fields.len()),
                ));
            }
            Ok(())
        };

        match sec {
            Section::Metadata => unreachable!(),
            Section::Operands => {
                arity(3, 3)?;
                let id = expect_id(&fields[0], line_no, "operand id")?;
                if fields[2].text.is_empty() {
                    return Err(syntax(line_no, fields[2].column, "missing unit"));
                }
                register("operand", &id)?;
                model.operands.push(Operand {
                    id,
                    name: fields[1].text.to_string(),
                    unit: fields[2].text.to_string(),
                });
            }
            Section::Processes => {
                arity(3, 3)?;
                let id = expect_id(&fields[0], line_no, "process id")?;
                let kind = ProcessKind::parse(fields[2].text).ok_or_else(|| {
                    syntax(
                        line_no,
                        fields[2].column,
                        format!("unknown process kind \"{}\"", fields[2].text),
                    )
                })?;
                register("process", &id)?;
                model.processes.push(ProcessDef {
                    id,
                    name: fields[1].text.to_string(),
                    kind,
                });
            }
            Section::Resources => {
                arity(3, 4)?;
                let id = expect_id(&fields[0], line_no, "resource id")?;
                let kind = ResourceKind::parse(fields[2].text).ok_or_else(|| {
                    syntax(
                        line_no,
                        fields[2].column,
                        format!("unknown resource kind \"{}\"", fields[2].text),
                    )
                })?;
                let location = fields
                    .get(3)
                    .map(|f| f.text.to_string())
                    .filter(|s| !s.is_empty());
                register("resource", &id)?;
                model.resources.push(Resource {
                    id,
                    name: fields[1].text.to_string(),
                    kind,
                    location,
                });
            }
            Section::Capabilities => {
                arity(3, 4)?;
                let id = expect_id(&fields[0], line_no, "capability id")?;
                let resource = expect_id(&fields[1], line_no, "resource id")?;
                let process = expect_id(&fields[2], line_no, "process id")?;
                let mut flows = Vec::new();
                if let Some(flow_field) = fields.get(3) {
                    if !flow_field.text.is_empty() {
                        // re-split the flow list keeping column offsets
                        let base = flow_field.column - 1;
                        for f in split_fields(flow_field.text, ';') {
                            let f = Field {
                                text: f.text,
                                column: base + f.column,
                            };
                            flows.push(parse_flow(&f, line_no)?);
                        }
                    }
                }
                register("capability", &id)?;
                cap_lines.push(line_no);
                model.capabilities.push(Capability {
                    id,
                    resource,
                    process,
                    flows,
                });
            }
        }
    }

    resolve_references(&model, &cap_lines)?;
    Ok(model)
}

fn resolve_references(model: &SystemModel, cap_lines: &[usize]) -> Result<(), ModelError> {
    let operands: HashSet<&str> = model.operands.iter().map(|o| o.id.as_str()).collect();
    let processes: HashSet<&str> = model.processes.iter().map(|p| p.id.as_str()).collect();
    let resources: HashSet<&str> = model.resources.iter().map(|r| r.id.as_str()).collect();
    for (cap, &line) in model.capabilities.iter().zip(cap_lines) {
        let dangling = |kind: &'static str, id: &str| ModelError::DanglingReference {
            line,
            kind,
            id: id.to_string(),
        };
        if !resources.contains(cap.resource.as_str()) {
            return Err(dangling("resource", &cap.resource));
        }
        if !processes.contains(cap.process.as_str()) {
            return Err(dangling("process", &cap.process));
        }
        for flow in &cap.flows {
            if !operands.contains(flow.operand.as_str()) {
                return Err(dangling("operand", &flow.operand));
            }
            if !resources.contains(flow.buffer.as_str()) {
                return Err(dangling("buffer", &flow.buffer));
            }
        }
    }
    Ok(())
}

/// Buffers in declaration order: every resource that is not a transportation
/// resource.
pub fn enumerate_buffers(model: &SystemModel) -> Vec<&Resource> {
    model.resources.iter().filter(|r| r.kind.is_buffer()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// Id of the offending item (capability id for capability violations).
    pub subject: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    fn push(&mut self, subject: &str, message: String) {
        self.violations.push(Violation {
            subject: subject.to_string(),
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return writeln!(f, "model is well-formed");
        }
        for v in &self.violations {
            writeln!(f, "{}: {}", v.subject, v.message)?;
        }
        Ok(())
    }
}

/// Check the capability and resource invariants. Violations are collected,
/// never raised.
pub fn validate_model(model: &SystemModel) -> ValidationReport {
    let mut report = ValidationReport::default();

    let check_dupes = |kind: &str, ids: Vec<&str>, report: &mut ValidationReport| {
        let mut seen = HashSet::new();
        for id in ids {
            if !seen.insert(id) {
                report.push(id, format!("duplicate {kind} id"));
            }
        }
    };
    check_dupes(
        "operand",
        model.operands.iter().map(|o| o.id.as_str()).collect(),
        &mut report,
    );
    check_dupes(
        "process",
        model.processes.iter().map(|p| p.id.as_str()).collect(),
        &mut report,
    );
    check_dupes(
        "resource",
        model.resources.iter().map(|r| r.id.as_str()).collect(),
        &mut report,
    );
    check_dupes(
        "capability",
        model.capabilities.iter().map(|c| c.id.as_str()).collect(),
        &mut report,
    );
    for o in &model.operands {
        if o.unit.trim().is_empty() {
            report.push(&o.id, "operand unit is empty".to_string());
        }
    }

    let mut pairs = HashSet::new();
    for cap in &model.capabilities {
        let resource = model.resource(&cap.resource);
        let process = model.process(&cap.process);
        match (resource, process) {
            (None, _) => report.push(&cap.id, format!("unknown resource \"{}\"", cap.resource)),
            (_, None) => report.push(&cap.id, format!("unknown process \"{}\"", cap.process)),
            (Some(r), Some(p)) => {
                if !r.kind.permits(p.kind) {
                    report.push(
                        &cap.id,
                        format!(
                            "{} resource \"{}\" cannot perform {} process \"{}\"",
                            r.kind.as_str(),
                            r.id,
                            p.kind.as_str(),
                            p.id
                        ),
                    );
                }
            }
        }
        if !pairs.insert((cap.resource.as_str(), cap.process.as_str())) {
            report.push(
                &cap.id,
                format!(
                    "(resource, process) pair ({}, {}) already declared",
                    cap.resource, cap.process
                ),
            );
        }
        if cap.flows.is_empty() {
            report.push(&cap.id, "capability declares no flows".to_string());
        }
        let mut places = HashSet::new();
        for flow in &cap.flows {
            match model.operand(&flow.operand) {
                None => report.push(&cap.id, format!("unknown operand \"{}\"", flow.operand)),
                Some(o) if o.unit != flow.unit => report.push(
                    &cap.id,
                    format!(
                        "flow of \"{}\" in unit \"{}\" but operand unit is \"{}\"",
                        flow.operand, flow.unit, o.unit
                    ),
                ),
                Some(_) => {}
            }
            match model.resource(&flow.buffer) {
                None => report.push(&cap.id, format!("unknown buffer \"{}\"", flow.buffer)),
                Some(r) if !r.kind.is_buffer() => report.push(
                    &cap.id,
                    format!("flow at transportation resource \"{}\" which is not a buffer", r.id),
                ),
                Some(_) => {}
            }
            if flow.rate == 0.0 {
                report.push(
                    &cap.id,
                    format!("zero-rate flow of \"{}\" @ \"{}\"", flow.operand, flow.buffer),
                );
            }
            if !places.insert((flow.operand.as_str(), flow.buffer.as_str())) {
                report.push(
                    &cap.id,
                    format!(
                        "operand \"{}\" @ \"{}\" appears twice in one capability",
                        flow.operand, flow.buffer
                    ),
                );
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[operands]
e | Electricity | kWh
[processes]
gen | Generate | transformation
[resources]
plant | Plant | transformation
[capabilities]
plant_gen | plant | gen | e @ plant : 1 kWh
";

    #[test]
    fn minimal_document() {
        let m = parse_system_model(MINIMAL).unwrap();
        assert_eq!(m.operands.len(), 1);
        assert_eq!(m.processes.len(), 1);
        assert_eq!(m.resources.len(), 1);
        assert_eq!(m.capabilities.len(), 1);
        assert!(validate_model(&m).is_empty());
    }

    #[test]
    fn australia_counts() {
        let m = SystemModel::australia_h2();
        // 12 listed operands plus electricity and stored electricity
        assert_eq!(m.operands.len(), 14);
        for id in [
            "coal",
            "processed_ng",
            "processed_oil",
            "biomass",
            "solar_irradiance",
            "geothermal_power",
            "wind_energy",
            "hydro_power",
            "heat_loss",
            "co2",
            "oxygen",
            "hydrogen",
        ] {
            assert!(m.operand(id).is_some(), "{id}");
        }
        assert_eq!(m.processes.len(), 15);
        assert_eq!(m.resources.len(), 12);
        assert_eq!(m.capabilities.len(), 13);
        let refined: Vec<_> = m
            .processes
            .iter()
            .filter(|p| p.kind == ProcessKind::RefinedTransportation)
            .map(|p| p.id.as_str())
            .collect();
        assert_eq!(
            refined,
            ["store_electricity", "transport_electricity", "store_freshwater"]
        );
        assert!(validate_model(&m).is_empty(), "{}", validate_model(&m));
    }

    #[test]
    fn australia_buffers() {
        let m = SystemModel::australia_h2();
        let buffers = enumerate_buffers(&m);
        assert_eq!(buffers.len(), 11);
        assert!(buffers.iter().all(|b| b.name != "Electric Power Line"));
        assert_eq!(buffers[0].id, "coal_plant");
        assert_eq!(buffers[10].id, "electrolyzer");
    }

    #[test]
    fn buffers_of_mixed_kinds_keep_order() {
        let doc = "\
[resources]
a | A | transformation
line | Line | transportation
b | B | independent-buffer
c | C | transformation
";
        let m = parse_system_model(doc).unwrap();
        let ids: Vec<_> = enumerate_buffers(&m).iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn only_transportation_has_no_buffers() {
        let doc = "[resources]\nl1 | Line | transportation\nl2 | Pipe | transportation\n";
        let m = parse_system_model(doc).unwrap();
        assert!(enumerate_buffers(&m).is_empty());
    }

    #[test]
    fn dangling_operand_is_named() {
        let doc = MINIMAL.replace("e @ plant : 1 kWh", "coal2 @ plant : -1 kWh");
        let err = parse_system_model(&doc).unwrap_err();
        assert!(matches!(
            &err,
            ModelError::DanglingReference { kind: "operand", id, line: 8 } if id == "coal2"
        ));
        assert!(err.to_string().contains("coal2"));
    }

    #[test]
    fn dangling_resource_and_buffer() {
        let doc = MINIMAL.replace("plant_gen | plant |", "plant_gen | nowhere |");
        assert!(matches!(
            parse_system_model(&doc),
            Err(ModelError::DanglingReference { kind: "resource", .. })
        ));
        let doc = MINIMAL.replace("e @ plant", "e @ attic");
        assert!(matches!(
            parse_system_model(&doc),
            Err(ModelError::DanglingReference { kind: "buffer", .. })
        ));
    }

    #[test]
    fn duplicate_id() {
        let doc = MINIMAL.replace(
            "e | Electricity | kWh",
            "e | Electricity | kWh\ne | Again | kWh",
        );
        let err = parse_system_model(&doc).unwrap_err();
        assert_eq!(
            err,
            ModelError::DuplicateId {
                line: 3,
                kind: "operand",
                id: "e".into()
            }
        );
    }

    #[test]
    fn syntax_errors_report_position() {
        let err = parse_system_model("e | x | kWh\n").unwrap_err();
        assert!(matches!(err, ModelError::Syntax { line: 1, .. }));

        let doc = MINIMAL.replace("e @ plant : 1 kWh", "e @ plant : lots kWh");
        match parse_system_model(&doc).unwrap_err() {
            ModelError::Syntax { line, column, message } => {
                assert_eq!(line, 8);
                assert_eq!(column, 27);
                assert!(message.contains("lots"));
            }
            other => panic!("{other:?}"),
        }

        let doc = MINIMAL.replace("transformation\n[resources]", "sideways\n[resources]");
        match parse_system_model(&doc).unwrap_err() {
            ModelError::Syntax { line: 4, column, .. } => assert_eq!(column, 18),
            other => panic!("{other:?}"),
        }
        assert!(parse_system_model("[bogus]\n").is_err());
        assert!(parse_system_model("[operands]\na | b\n").is_err());
    }

    #[test]
    fn kind_mismatch_is_one_violation() {
        let doc = "\
[operands]
e | Electricity | kWh
[processes]
gen | Generate | transformation
[resources]
plant | Plant | transformation
line | Line | transportation
[capabilities]
line_gen | line | gen | e @ plant : 1 kWh
";
        let report = validate_model(&parse_system_model(doc).unwrap());
        assert_eq!(report.len(), 1, "{report}");
        assert_eq!(report.violations[0].subject, "line_gen");
    }

    #[test]
    fn zero_flow_capability_is_one_violation() {
        let doc = MINIMAL.replace(" | e @ plant : 1 kWh", "");
        let report = validate_model(&parse_system_model(&doc).unwrap());
        assert_eq!(report.len(), 1, "{report}");
        assert!(report.violations[0].message.contains("no flows"));
    }

    #[test]
    fn other_violations() {
        let doc = "\
[operands]
e | Electricity | kWh
[processes]
gen | Generate | transformation
[resources]
plant | Plant | transformation
line | Line | transportation
[capabilities]
c1 | plant | gen | e @ line : 1 kWh ; e @ plant : 2 MWh
c2 | plant | gen | e @ plant : 0 kWh
";
        let report = validate_model(&parse_system_model(doc).unwrap());
        let msgs: Vec<_> = report.violations.iter().map(|v| v.message.as_str()).collect();
        assert_eq!(report.len(), 4, "{report}");
        assert!(msgs.iter().any(|m| m.contains("not a buffer")));
        assert!(msgs.iter().any(|m| m.contains("unit")));
        assert!(msgs.iter().any(|m| m.contains("already declared")));
        assert!(msgs.iter().any(|m| m.contains("zero-rate")));
    }

    #[test]
    fn fixture_round_trips() {
        let m = SystemModel::australia_h2();
        let again = parse_system_model(&m.to_document()).unwrap();
        assert_eq!(m, again);
    }
}
