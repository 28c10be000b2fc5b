//! The template document format and the on-disk repository.
//!
//! Documents are UTF-8 XML (extension `.stpl.xml`):
//!
//! ```xml
//! <?xml version="1.0" encoding="UTF-8"?>
//! <situations version="1">
//!   <situation name="Working">
//!     <and rare="true">
//!       <condition sensor="working-motion" comparator="EQ" value="1"/>
//!       <condition sensor="working-light" comparator="GT" value="0.5"/>
//!     </and>
//!   </situation>
//! </situations>
//! ```
//!
//! Each situation holds exactly one operator element (`<and>`/`<or>`),
//! nesting operators and `<condition>` leaves. The operand kind is
//! inferred from the comparator — ordering comparators take thresholds,
//! `EQ`/`NE` take exact values — and an explicit `kind` attribute covers
//! the one non-inferable combination (a threshold compared with `EQ`/`NE`).
//!
//! Serialization is canonical: two-space indent, fixed attribute order,
//! `rare` and `kind` attributes only when they carry information. Parsing
//! a serialized document reproduces the original value exactly.
//!
//! Three error layers keep failures diagnosable: malformed XML reports the
//! line it breaks on, schema violations name the offending element or
//! attribute, and semantic violations name the situation they occur in.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::model::{
    Comparator, Condition, Operand, SituationTemplate, TemplateDocument, TemplateNode,
};
use crate::Result;

/// Canonical file extension for template documents.
pub const TEMPLATE_EXTENSION: &str = "stpl.xml";

const FORMAT_VERSION: &str = "1";

fn line_of(input: &str, byte_offset: u64) -> usize {
    let end = (byte_offset as usize).min(input.len());
    1 + input.as_bytes()[..end].iter().filter(|b| **b == b'\n').count()
}

fn syntax(input: &str, byte_offset: u64, message: impl Into<String>) -> Error {
    Error::Syntax {
        line: line_of(input, byte_offset),
        message: message.into(),
    }
}

fn schema(message: impl Into<String>) -> Error {
    Error::Schema {
        message: message.into(),
    }
}

fn semantic(situation: &str, message: impl Into<String>) -> Error {
    Error::Semantic {
        situation: situation.to_string(),
        message: message.into(),
    }
}

/// Collects an element's attributes, rejecting any outside `allowed`.
fn attributes(element: &BytesStart<'_>, allowed: &[&str]) -> Result<BTreeMap<String, String>> {
    let name = String::from_utf8_lossy(element.name().as_ref()).into_owned();
    let mut map = BTreeMap::new();
    for attr in element.attributes() {
        let attr = attr.map_err(|e| schema(format!("bad attribute in <{name}>: {e}")))?;
        let key = std::str::from_utf8(attr.key.as_ref())
            .map_err(|_| schema(format!("non-UTF-8 attribute name in <{name}>")))?
            .to_string();
        if !allowed.contains(&key.as_str()) {
            return Err(schema(format!("unknown attribute `{key}` on <{name}>")));
        }
        let value = attr
            .unescape_value()
            .map_err(|e| schema(format!("bad value for `{key}` on <{name}>: {e}")))?
            .into_owned();
        map.insert(key, value);
    }
    Ok(map)
}

fn element_name(element: &BytesStart<'_>) -> String {
    String::from_utf8_lossy(element.name().as_ref()).into_owned()
}

fn end_name(element: &quick_xml::events::BytesEnd<'_>) -> String {
    String::from_utf8_lossy(element.name().as_ref()).into_owned()
}

fn condition_from(attrs: &BTreeMap<String, String>, situation: &str) -> Result<Condition> {
    let required = |key: &str| {
        attrs
            .get(key)
            .ok_or_else(|| schema(format!("<condition> is missing the `{key}` attribute")))
    };
    let sensor = required("sensor")?;
    let comparator_text = required("comparator")?;
    let value_text = required("value")?;
    let comparator = Comparator::parse(comparator_text)
        .ok_or_else(|| semantic(situation, format!("unknown comparator `{comparator_text}`")))?;
    let value: f64 = value_text.parse().map_err(|_| {
        semantic(
            situation,
            format!("cannot parse value `{value_text}` on `{sensor}`"),
        )
    })?;
    let operand = match attrs.get("kind").map(String::as_str) {
        None => match comparator {
            Comparator::Eq | Comparator::Ne => Operand::Exact(value),
            _ => Operand::Threshold(value),
        },
        Some("threshold") => Operand::Threshold(value),
        Some("exact") => Operand::Exact(value),
        Some(other) => return Err(semantic(situation, format!("unknown operand kind `{other}`"))),
    };
    Condition::new(sensor.clone(), comparator, operand).map_err(|e| match e {
        Error::Invalid { message, .. } => semantic(situation, message),
        other => other,
    })
}

fn parse_rare(attrs: &BTreeMap<String, String>, situation: &str) -> Result<bool> {
    match attrs.get("rare").map(String::as_str) {
        None | Some("false") => Ok(false),
        Some("true") => Ok(true),
        Some(other) => Err(semantic(
            situation,
            format!("rare must be `true` or `false`, not `{other}`"),
        )),
    }
}

enum Frame {
    And { rare: bool, children: Vec<TemplateNode> },
    Or { children: Vec<TemplateNode> },
}

impl Frame {
    fn push(&mut self, node: TemplateNode) {
        match self {
            Frame::And { children, .. } | Frame::Or { children } => children.push(node),
        }
    }

    fn into_node(self) -> TemplateNode {
        match self {
            Frame::And { rare, children } => TemplateNode::And { children, rare },
            Frame::Or { children } => TemplateNode::Or { children },
        }
    }
}

/// Consumes events until `</situation>`, building the single root node.
fn parse_situation(
    reader: &mut Reader<&[u8]>,
    input: &str,
    situation: &str,
) -> Result<SituationTemplate> {
    let mut stack: Vec<Frame> = Vec::new();
    let mut root: Option<TemplateNode> = None;
    let mut open_condition: Option<Condition> = None;

    let attach = |stack: &mut Vec<Frame>, root: &mut Option<TemplateNode>, node| {
        if let Some(top) = stack.last_mut() {
            top.push(node);
            Ok(())
        } else if root.is_none() {
            *root = Some(node);
            Ok(())
        } else {
            Err(semantic(
                situation,
                "situation must contain exactly one root operator",
            ))
        }
    };

    loop {
        let event = reader
            .read_event()
            .map_err(|e| syntax(input, reader.buffer_position(), e.to_string()))?;
        if open_condition.is_some() && !matches!(event, Event::End(_) | Event::Comment(_)) {
            return Err(schema("<condition> elements cannot have children"));
        }
        match event {
            Event::Comment(_) => {}
            Event::Start(e) => match element_name(&e).as_str() {
                "and" => {
                    let attrs = attributes(&e, &["rare"])?;
                    let rare = parse_rare(&attrs, situation)?;
                    stack.push(Frame::And {
                        rare,
                        children: Vec::new(),
                    });
                }
                "or" => {
                    attributes(&e, &[])?;
                    stack.push(Frame::Or {
                        children: Vec::new(),
                    });
                }
                "condition" => {
                    let attrs = attributes(&e, &["sensor", "comparator", "value", "kind"])?;
                    open_condition = Some(condition_from(&attrs, situation)?);
                }
                other => {
                    return Err(schema(format!("unexpected element <{other}> in <situation>")))
                }
            },
            Event::Empty(e) => match element_name(&e).as_str() {
                "condition" => {
                    let attrs = attributes(&e, &["sensor", "comparator", "value", "kind"])?;
                    let condition = condition_from(&attrs, situation)?;
                    attach(&mut stack, &mut root, TemplateNode::Condition(condition))?;
                }
                // Childless operators surface as arity violations below.
                "and" => {
                    let attrs = attributes(&e, &["rare"])?;
                    let rare = parse_rare(&attrs, situation)?;
                    attach(
                        &mut stack,
                        &mut root,
                        TemplateNode::And {
                            children: Vec::new(),
                            rare,
                        },
                    )?;
                }
                "or" => {
                    attributes(&e, &[])?;
                    attach(
                        &mut stack,
                        &mut root,
                        TemplateNode::Or {
                            children: Vec::new(),
                        },
                    )?;
                }
                other => {
                    return Err(schema(format!("unexpected element <{other}> in <situation>")))
                }
            },
            Event::End(e) => match end_name(&e).as_str() {
                "condition" => {
                    let condition = open_condition
                        .take()
                        .expect("matching end tags are enforced by the reader");
                    attach(&mut stack, &mut root, TemplateNode::Condition(condition))?;
                }
                "and" | "or" => {
                    let frame = stack
                        .pop()
                        .expect("matching end tags are enforced by the reader");
                    attach(&mut stack, &mut root, frame.into_node())?;
                }
                "situation" => {
                    let root = root.ok_or_else(|| {
                        semantic(situation, "situation must contain one operator element")
                    })?;
                    return SituationTemplate::new(situation, root);
                }
                other => return Err(schema(format!("unexpected closing tag </{other}>"))),
            },
            Event::Text(_) | Event::CData(_) => {
                return Err(schema("unexpected text content inside <situation>"))
            }
            Event::Eof => {
                return Err(syntax(
                    input,
                    reader.buffer_position(),
                    "unexpected end of document inside <situation>",
                ))
            }
            Event::Decl(_) | Event::PI(_) | Event::DocType(_) => {
                return Err(schema("unexpected markup inside <situation>"))
            }
        }
    }
}

/// Parses a template document from its XML text.
pub fn parse_templates(input: &str) -> Result<TemplateDocument> {
    let mut reader = Reader::from_str(input);
    reader.config_mut().trim_text(true);

    let mut templates = Vec::new();
    let mut seen_root = false;
    let mut root_closed = false;

    let check_root = |e: &BytesStart<'_>| -> Result<()> {
        let name = element_name(e);
        if name != "situations" {
            return Err(schema(format!(
                "document root must be <situations>, found <{name}>"
            )));
        }
        let attrs = attributes(e, &["version"])?;
        match attrs.get("version").map(String::as_str) {
            Some(FORMAT_VERSION) => Ok(()),
            Some(other) => Err(schema(format!(
                "unsupported document version `{other}` (expected `{FORMAT_VERSION}`)"
            ))),
            None => Err(schema("<situations> is missing the `version` attribute")),
        }
    };

    loop {
        let event = reader
            .read_event()
            .map_err(|e| syntax(input, reader.buffer_position(), e.to_string()))?;
        match event {
            Event::Decl(_) | Event::Comment(_) => {}
            Event::Eof => {
                if !seen_root || !root_closed {
                    return Err(syntax(
                        input,
                        reader.buffer_position(),
                        "unexpected end of document",
                    ));
                }
                break;
            }
            Event::Start(e) if !seen_root => {
                check_root(&e)?;
                seen_root = true;
            }
            Event::Empty(e) if !seen_root => {
                check_root(&e)?;
                seen_root = true;
                root_closed = true;
            }
            _ if root_closed => {
                return Err(syntax(
                    input,
                    reader.buffer_position(),
                    "content after the document root",
                ));
            }
            Event::Start(e) => {
                let name = element_name(&e);
                if name != "situation" {
                    return Err(schema(format!(
                        "unexpected element <{name}> in <situations>"
                    )));
                }
                let attrs = attributes(&e, &["name"])?;
                let situation = attrs
                    .get("name")
                    .ok_or_else(|| schema("<situation> is missing the `name` attribute"))?;
                templates.push(parse_situation(&mut reader, input, situation)?);
            }
            Event::Empty(e) => {
                let name = element_name(&e);
                if name != "situation" {
                    return Err(schema(format!(
                        "unexpected element <{name}> in <situations>"
                    )));
                }
                let attrs = attributes(&e, &["name"])?;
                let situation = attrs.get("name").cloned().unwrap_or_default();
                return Err(semantic(
                    &situation,
                    "situation must contain one operator element",
                ));
            }
            Event::End(e) => {
                let name = end_name(&e);
                if name != "situations" {
                    return Err(schema(format!("unexpected closing tag </{name}>")));
                }
                root_closed = true;
            }
            Event::Text(_) | Event::CData(_) => {
                return Err(schema("unexpected text content in <situations>"))
            }
            Event::PI(_) | Event::DocType(_) => {
                return Err(schema("unsupported markup in the document"))
            }
        }
    }
    TemplateDocument::new(templates)
}

fn write_condition(out: &mut String, condition: &Condition, pad: &str) {
    let kind = match (condition.operand, condition.comparator) {
        // The only combination the comparator does not determine.
        (Operand::Threshold(_), Comparator::Eq | Comparator::Ne) => " kind=\"threshold\"",
        _ => "",
    };
    out.push_str(&format!(
        "{pad}<condition sensor=\"{}\" comparator=\"{}\" value=\"{}\"{kind}/>\n",
        escape(&condition.sensor),
        condition.comparator.as_str(),
        condition.operand.value(),
    ));
}

fn write_node(out: &mut String, node: &TemplateNode, depth: usize) {
    let pad = "  ".repeat(depth);
    match node {
        TemplateNode::Condition(c) => write_condition(out, c, &pad),
        TemplateNode::And { children, rare } => {
            let rare = if *rare { " rare=\"true\"" } else { "" };
            out.push_str(&format!("{pad}<and{rare}>\n"));
            for child in children {
                write_node(out, child, depth + 1);
            }
            out.push_str(&format!("{pad}</and>\n"));
        }
        TemplateNode::Or { children } => {
            out.push_str(&format!("{pad}<or>\n"));
            for child in children {
                write_node(out, child, depth + 1);
            }
            out.push_str(&format!("{pad}</or>\n"));
        }
    }
}

/// Serializes a document to its canonical XML text.
pub fn serialize_templates(doc: &TemplateDocument) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!("<situations version=\"{FORMAT_VERSION}\">\n"));
    for template in &doc.templates {
        out.push_str(&format!(
            "  <situation name=\"{}\">\n",
            escape(&template.situation)
        ));
        write_node(&mut out, &template.root, 2);
        out.push_str("  </situation>\n");
    }
    out.push_str("</situations>\n");
    out
}

fn content_hash(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// A template document bound to a file.
///
/// The repository remembers the content hash of the last version it read
/// or wrote. A store re-reads the file first and refuses to overwrite
/// content it has not seen, so two writers cannot silently clobber each
/// other. Writes go through a temporary file in the same directory and a
/// rename, so readers never observe a half-written document.
#[derive(Debug)]
pub struct Repository {
    path: PathBuf,
    last_hash: Option<[u8; 32]>,
}

impl Repository {
    /// Opens an existing repository file and parses its document.
    pub fn open(path: impl Into<PathBuf>) -> Result<(Self, TemplateDocument)> {
        let path = path.into();
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let text = String::from_utf8(bytes).map_err(|_| Error::Syntax {
            line: 1,
            message: "file is not valid UTF-8".to_string(),
        })?;
        let doc = parse_templates(&text)?;
        let last_hash = Some(content_hash(text.as_bytes()));
        Ok((Repository { path, last_hash }, doc))
    }

    /// Binds a repository to a path that does not exist yet. The first
    /// store creates the file — and fails if someone else got there first.
    pub fn create(path: impl Into<PathBuf>) -> Self {
        Repository {
            path: path.into(),
            last_hash: None,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Atomically writes the document, failing with
    /// [`Error::ConcurrentModification`] if the file changed (or appeared,
    /// or vanished) since this repository last read or wrote it.
    pub fn store(&mut self, doc: &TemplateDocument) -> Result<()> {
        let conflict = || Error::ConcurrentModification {
            path: self.path.display().to_string(),
        };
        match (std::fs::read(&self.path), self.last_hash) {
            (Ok(bytes), Some(hash)) => {
                if content_hash(&bytes) != hash {
                    return Err(conflict());
                }
            }
            (Ok(_), None) => return Err(conflict()),
            (Err(e), expected) if e.kind() == std::io::ErrorKind::NotFound => {
                if expected.is_some() {
                    return Err(conflict());
                }
            }
            (Err(e), _) => return Err(Error::io(&self.path, e)),
        }

        let serialized = serialize_templates(doc);
        let dir = match self.path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp =
            tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(&self.path, e))?;
        tmp.write_all(serialized.as_bytes())
            .map_err(|e| Error::io(&self.path, e))?;
        tmp.persist(&self.path)
            .map_err(|e| Error::io(&self.path, e.error))?;
        self.last_hash = Some(content_hash(serialized.as_bytes()));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cond(sensor: &str, comparator: Comparator, operand: Operand) -> TemplateNode {
        TemplateNode::Condition(Condition::new(sensor, comparator, operand).unwrap())
    }

    fn sample_doc() -> TemplateDocument {
        let working = SituationTemplate::new(
            "Working",
            TemplateNode::or(vec![
                TemplateNode::and(vec![
                    cond("working-motion", Comparator::Eq, Operand::Exact(1.0)),
                    cond("working-light", Comparator::Gt, Operand::Threshold(0.5)),
                ]),
                TemplateNode::rare_and(vec![
                    cond("management-motion", Comparator::Eq, Operand::Exact(1.0)),
                    cond("management-light", Comparator::Gt, Operand::Threshold(0.5)),
                ]),
            ]),
        )
        .unwrap();
        let closing = SituationTemplate::new(
            "Closing",
            TemplateNode::and(vec![
                cond("prev-lights", Comparator::Eq, Operand::Exact(1.0)),
                cond("working-light", Comparator::Le, Operand::Threshold(0.3)),
            ]),
        )
        .unwrap();
        TemplateDocument::new(vec![working, closing]).unwrap()
    }

    #[test]
    fn serialization_is_canonical() {
        let doc = TemplateDocument::new(vec![SituationTemplate::new(
            "Educating",
            TemplateNode::and(vec![
                cond("tv", Comparator::Eq, Operand::Exact(1.0)),
                cond("noise", Comparator::Gt, Operand::Threshold(0.45)),
                cond("level", Comparator::Eq, Operand::Threshold(1.0)),
            ]),
        )
        .unwrap()])
        .unwrap();
        let expected = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
<situations version=\"1\">\n\
\x20 <situation name=\"Educating\">\n\
\x20   <and>\n\
\x20     <condition sensor=\"tv\" comparator=\"EQ\" value=\"1\"/>\n\
\x20     <condition sensor=\"noise\" comparator=\"GT\" value=\"0.45\"/>\n\
\x20     <condition sensor=\"level\" comparator=\"EQ\" value=\"1\" kind=\"threshold\"/>\n\
\x20   </and>\n\
\x20 </situation>\n\
</situations>\n";
        assert_eq!(serialize_templates(&doc), expected);
    }

    #[test]
    fn parse_inverts_serialize() {
        let doc = sample_doc();
        let text = serialize_templates(&doc);
        let parsed = parse_templates(&text).unwrap();
        assert_eq!(parsed, doc);
        // And canonical text is a fixed point.
        assert_eq!(serialize_templates(&parsed), text);
    }

    #[test]
    fn operand_kind_follows_the_comparator_unless_stated() {
        let text = r#"<?xml version="1.0" encoding="UTF-8"?>
<situations version="1">
  <situation name="S">
    <and>
      <condition sensor="a" comparator="GT" value="0.5"/>
      <condition sensor="b" comparator="EQ" value="1"/>
      <condition sensor="c" comparator="NE" value="0.75" kind="threshold"/>
    </and>
  </situation>
</situations>
"#;
        let doc = parse_templates(text).unwrap();
        let TemplateNode::And { children, .. } = &doc.templates[0].root else {
            panic!("expected and root");
        };
        let operands: Vec<Operand> = children
            .iter()
            .map(|c| match c {
                TemplateNode::Condition(c) => c.operand,
                _ => panic!("expected condition"),
            })
            .collect();
        assert_eq!(
            operands,
            vec![
                Operand::Threshold(0.5),
                Operand::Exact(1.0),
                Operand::Threshold(0.75),
            ]
        );
    }

    #[test]
    fn special_characters_in_names_round_trip() {
        let doc = TemplateDocument::new(vec![SituationTemplate::new(
            "A & B <escaped>",
            TemplateNode::and(vec![cond(
                "weird\"sensor'&",
                Comparator::Gt,
                Operand::Threshold(0.5),
            )]),
        )
        .unwrap()])
        .unwrap();
        let parsed = parse_templates(&serialize_templates(&doc)).unwrap();
        assert_eq!(parsed, doc);
    }

    #[test]
    fn malformed_xml_reports_the_line() {
        let text = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
<situations version=\"1\">\n\
  <situation name=\"S\">\n\
    <and></or>\n\
  </situation>\n\
</situations>\n";
        let err = parse_templates(text).unwrap_err();
        let Error::Syntax { line, .. } = err else {
            panic!("expected a syntax error, got {err:?}");
        };
        assert_eq!(line, 4);
    }

    #[test]
    fn truncated_documents_are_syntax_errors() {
        let text = "<?xml version=\"1.0\"?>\n<situations version=\"1\">\n  <situation name=\"S\">\n    <and>\n";
        assert!(matches!(
            parse_templates(text),
            Err(Error::Syntax { .. })
        ));
    }

    fn wrap(body: &str) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<situations version=\"1\">\n{body}\n</situations>\n"
        )
    }

    #[test]
    fn schema_violations_are_reported() {
        // Wrong version.
        let err = parse_templates(
            "<situations version=\"2\"><situation name=\"S\"><and><condition sensor=\"a\" comparator=\"GT\" value=\"0.5\"/></and></situation></situations>",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema { .. }), "{err:?}");

        // Missing version.
        assert!(matches!(
            parse_templates("<situations></situations>"),
            Err(Error::Schema { .. })
        ));

        // Unknown element.
        let err = parse_templates(&wrap(
            "<situation name=\"S\"><xor><condition sensor=\"a\" comparator=\"GT\" value=\"0.5\"/></xor></situation>",
        ))
        .unwrap_err();
        assert!(matches!(err, Error::Schema { message } if message.contains("xor")));

        // Unknown attribute.
        let err = parse_templates(&wrap(
            "<situation name=\"S\"><or fast=\"yes\"><condition sensor=\"a\" comparator=\"GT\" value=\"0.5\"/></or></situation>",
        ))
        .unwrap_err();
        assert!(matches!(err, Error::Schema { message } if message.contains("fast")));

        // Missing condition attribute.
        let err = parse_templates(&wrap(
            "<situation name=\"S\"><and><condition comparator=\"GT\" value=\"0.5\"/></and></situation>",
        ))
        .unwrap_err();
        assert!(matches!(err, Error::Schema { message } if message.contains("sensor")));

        // Text where structure is expected.
        let err = parse_templates(&wrap("<situation name=\"S\"><and>hello</and></situation>"))
            .unwrap_err();
        assert!(matches!(err, Error::Schema { .. }), "{err:?}");
    }

    #[test]
    fn semantic_violations_name_the_situation() {
        // Bad comparator.
        let err = parse_templates(&wrap(
            "<situation name=\"Working\"><and><condition sensor=\"a\" comparator=\"GTE\" value=\"0.5\"/></and></situation>",
        ))
        .unwrap_err();
        assert!(
            matches!(&err, Error::Semantic { situation, .. } if situation == "Working"),
            "{err:?}"
        );

        // Unparseable value.
        let err = parse_templates(&wrap(
            "<situation name=\"Working\"><and><condition sensor=\"a\" comparator=\"GT\" value=\"dim\"/></and></situation>",
        ))
        .unwrap_err();
        assert!(matches!(&err, Error::Semantic { .. }), "{err:?}");

        // Threshold out of range.
        let err = parse_templates(&wrap(
            "<situation name=\"Working\"><and><condition sensor=\"a\" comparator=\"GT\" value=\"1.5\"/></and></situation>",
        ))
        .unwrap_err();
        assert!(matches!(&err, Error::Semantic { .. }), "{err:?}");

        // Exact operand with an ordering comparator.
        let err = parse_templates(&wrap(
            "<situation name=\"Working\"><and><condition sensor=\"a\" comparator=\"LT\" value=\"1\" kind=\"exact\"/></and></situation>",
        ))
        .unwrap_err();
        assert!(matches!(&err, Error::Semantic { .. }), "{err:?}");

        // Arity: or with a single child.
        let err = parse_templates(&wrap(
            "<situation name=\"Working\"><or><condition sensor=\"a\" comparator=\"GT\" value=\"0.5\"/></or></situation>",
        ))
        .unwrap_err();
        assert!(
            matches!(&err, Error::Semantic { situation, message }
                if situation == "Working" && message.contains("or")),
            "{err:?}"
        );

        // Two root operators.
        let err = parse_templates(&wrap(
            "<situation name=\"Working\">\
             <and><condition sensor=\"a\" comparator=\"GT\" value=\"0.5\"/></and>\
             <and><condition sensor=\"b\" comparator=\"GT\" value=\"0.5\"/></and>\
             </situation>",
        ))
        .unwrap_err();
        assert!(matches!(&err, Error::Semantic { .. }), "{err:?}");

        // No operator at all.
        let err = parse_templates(&wrap("<situation name=\"Working\"></situation>"))
            .unwrap_err();
        assert!(matches!(&err, Error::Semantic { .. }), "{err:?}");

        // Duplicate situation names.
        let body = "<situation name=\"W\"><and><condition sensor=\"a\" comparator=\"GT\" value=\"0.5\"/></and></situation>";
        let err = parse_templates(&wrap(&format!("{body}{body}"))).unwrap_err();
        assert!(
            matches!(&err, Error::Semantic { message, .. } if message.contains("duplicate")),
            "{err:?}"
        );

        // Reserved name.
        let err = parse_templates(&wrap(
            "<situation name=\"none\"><and><condition sensor=\"a\" comparator=\"GT\" value=\"0.5\"/></and></situation>",
        ))
        .unwrap_err();
        assert!(matches!(&err, Error::ReservedLabel { .. }), "{err:?}");
    }

    #[test]
    fn repository_round_trips_documents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(format!("repo.{TEMPLATE_EXTENSION}"));
        let doc = sample_doc();

        let mut repo = Repository::create(&path);
        repo.store(&doc).unwrap();

        let (mut reopened, loaded) = Repository::open(&path).unwrap();
        assert_eq!(loaded, doc);

        // Same handle can keep writing.
        reopened.store(&loaded).unwrap();
        let (_, again) = Repository::open(&path).unwrap();
        assert_eq!(again, doc);
    }

    #[test]
    fn repository_detects_concurrent_writers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("repo.stpl.xml");
        let doc = sample_doc();
        Repository::create(&path).store(&doc).unwrap();

        let (mut a, doc_a) = Repository::open(&path).unwrap();
        let (mut b, mut doc_b) = Repository::open(&path).unwrap();

        doc_b.templates.truncate(1);
        b.store(&doc_b).unwrap();

        let err = a.store(&doc_a).unwrap_err();
        assert!(matches!(err, Error::ConcurrentModification { .. }), "{err:?}");

        // Creating over an existing file is also a conflict.
        let err = Repository::create(&path).store(&doc).unwrap_err();
        assert!(matches!(err, Error::ConcurrentModification { .. }), "{err:?}");

        // A vanished file is a conflict, not a silent re-create.
        std::fs::remove_file(&path).unwrap();
        let err = b.store(&doc_b).unwrap_err();
        assert!(matches!(err, Error::ConcurrentModification { .. }), "{err:?}");
    }

    fn arb_condition() -> impl Strategy<Value = Condition> {
        let sensor = prop::sample::select(vec!["light", "motion", "noise", "tv", "a&b"]);
        let comparator = prop::sample::select(vec![
            Comparator::Lt,
            Comparator::Le,
            Comparator::Gt,
            Comparator::Ge,
            Comparator::Eq,
            Comparator::Ne,
        ]);
        (sensor, comparator, 0..=100u32, any::<bool>()).prop_map(
            |(sensor, comparator, step, exact)| {
                let value = step as f64 / 100.0;
                let operand = match comparator {
                    Comparator::Eq | Comparator::Ne if exact => Operand::Exact(value),
                    _ => Operand::Threshold(value),
                };
                Condition::new(sensor, comparator, operand).unwrap()
            },
        )
    }

    fn arb_node() -> impl Strategy<Value = TemplateNode> {
        let leaf = arb_condition().prop_map(TemplateNode::Condition);
        leaf.prop_recursive(3, 24, 3, |inner| {
            prop_oneof![
                (prop::collection::vec(inner.clone(), 2..4), any::<bool>())
                    .prop_map(|(children, rare)| TemplateNode::And { children, rare }),
                prop::collection::vec(inner, 2..4)
                    .prop_map(|children| TemplateNode::Or { children }),
            ]
        })
    }

    fn arb_document() -> impl Strategy<Value = TemplateDocument> {
        prop::collection::vec(arb_node(), 1..4).prop_map(|roots| {
            let templates = roots
                .into_iter()
                .enumerate()
                .map(|(i, root)| {
                    let root = match root {
                        TemplateNode::Condition(c) => {
                            TemplateNode::and(vec![TemplateNode::Condition(c)])
                        }
                        other => other,
                    };
                    SituationTemplate::new(format!("Situation-{i}"), root).unwrap()
                })
                .collect();
            TemplateDocument::new(templates).unwrap()
        })
    }

    proptest! {
        #[test]
        fn random_documents_round_trip(doc in arb_document()) {
            let text = serialize_templates(&doc);
            let parsed = parse_templates(&text).unwrap();
            prop_assert_eq!(&parsed, &doc);
            prop_assert_eq!(serialize_templates(&parsed), text);
        }
    }
}
