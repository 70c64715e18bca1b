use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{FrameTwin, MaskRef, ObjectInstance, SpatialProps, TwinError, VideoTwin};
use crate::canonical::quantize;
use crate::mask::RleMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NotParseable,
    MissingField,
    TypeMismatch,
    RangeViolation,
    IdConflict,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::NotParseable => "not_parseable",
            ViolationKind::MissingField => "missing_field",
            ViolationKind::TypeMismatch => "type_mismatch",
            ViolationKind::RangeViolation => "range_violation",
            ViolationKind::IdConflict => "id_conflict",
        })
    }
}

/// One schema problem. `path` uses `frames[0].instances[1].spatial.x`
/// notation; the empty path is the document root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        Self {
            valid: violations.is_empty(),
            violations,
        }
    }

    pub fn has_kind(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

/// Parses a twin document, rejecting anything outside the schema.
///
/// Numbers are quantized to canonical precision and instances are sorted by
/// id, so the result is always in canonical form.
pub fn parse_twin(text: &str) -> Result<VideoTwin, TwinError> {
    let value: Value = serde_json::from_str(text).map_err(|e| TwinError::NotParseable {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut checker = Checker::default();
    let twin = checker.document(&value);
    match checker.violations.into_iter().next() {
        Some(v) => Err(TwinError::SchemaViolation {
            path: v.path,
            kind: v.kind,
            message: v.message,
        }),
        None => Ok(twin.expect("no violations implies a twin")),
    }
}

/// Checks a candidate edit against the schema of `reference`.
///
/// Removing, adding or changing instances is allowed; the candidate must
/// parse, carry every required field with the right type and range, and keep
/// the reference frame count.
pub fn validate_against_schema(candidate: &str, reference: &VideoTwin) -> ValidationReport {
    let (twin, mut report) = check_text(candidate);
    if let Some(twin) = twin {
        if twin.frame_count != reference.frame_count {
            report.violations.push(Violation {
                path: "frame_count".into(),
                kind: ViolationKind::RangeViolation,
                message: format!(
                    "edited twin has {} frames, original has {}",
                    twin.frame_count, reference.frame_count
                ),
            });
            report.valid = false;
        }
    }
    report
}

pub(super) fn check_text(text: &str) -> (Option<VideoTwin>, ValidationReport) {
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            let report = ValidationReport::from_violations(vec![Violation {
                path: String::new(),
                kind: ViolationKind::NotParseable,
                message: format!("line {}, column {}: {}", e.line(), e.column(), e),
            }]);
            return (None, report);
        }
    };
    let mut checker = Checker::default();
    let twin = checker.document(&value);
    (twin, ValidationReport::from_violations(checker.violations))
}

/// Looks up a violation path inside a parsed document.
pub fn resolve_path<'a>(doc: &'a Value, path: &str) -> Option<&'a Value> {
    let mut current = doc;
    if path.is_empty() {
        return Some(current);
    }
    for part in path.split('.') {
        let (name, indices) = match part.find('[') {
            Some(pos) => (&part[..pos], &part[pos..]),
            None => (part, ""),
        };
        if !name.is_empty() {
            current = current.get(name)?;
        }
        for index in indices.split('[').skip(1) {
            let index: usize = index.strip_suffix(']')?.parse().ok()?;
            current = current.get(index)?;
        }
    }
    Some(current)
}

#[derive(Default)]
struct Checker {
    violations: Vec<Violation>,
}

fn join(parent: &str, key: &str) -> String {
    if parent.is_empty() {
        key.to_string()
    } else {
        format!("{parent}.{key}")
    }
}

fn type_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_u64() || n.is_i64() => "integer",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

impl Checker {
    fn push(&mut self, path: String, kind: ViolationKind, message: impl Into<String>) {
        self.violations.push(Violation {
            path,
            kind,
            message: message.into(),
        });
    }

    fn mismatch(&mut self, path: String, expected: &str, got: &Value) {
        let message = format!("expected {expected}, got {}", type_name(got));
        self.push(path, ViolationKind::TypeMismatch, message);
    }

    fn field<'a>(&mut self, obj: &'a Map<String, Value>, parent: &str, key: &str) -> Option<&'a Value> {
        let value = obj.get(key);
        if value.is_none() {
            self.push(
                join(parent, key),
                ViolationKind::MissingField,
                format!("required field `{key}` is missing"),
            );
        }
        value
    }

    fn object<'a>(&mut self, value: &'a Value, path: &str) -> Option<&'a Map<String, Value>> {
        match value.as_object() {
            Some(obj) => Some(obj),
            None => {
                self.mismatch(path.to_string(), "object", value);
                None
            }
        }
    }

    fn unsigned(&mut self, obj: &Map<String, Value>, parent: &str, key: &str) -> Option<u64> {
        let value = self.field(obj, parent, key)?;
        let path = join(parent, key);
        match value {
            Value::Number(n) if n.is_u64() => n.as_u64(),
            Value::Number(n) if n.is_i64() => {
                self.push(path, ViolationKind::RangeViolation, format!("{n} is negative"));
                None
            }
            other => {
                self.mismatch(path, "integer", other);
                None
            }
        }
    }

    fn number(&mut self, obj: &Map<String, Value>, parent: &str, key: &str, min_exclusive: bool) -> Option<f64> {
        let value = self.field(obj, parent, key)?;
        let path = join(parent, key);
        let Some(raw) = value.as_f64().filter(|_| value.is_number()) else {
            self.mismatch(path, "number", value);
            return None;
        };
        let v = quantize(raw);
        let in_range = if min_exclusive {
            v > 0.0 && v <= 1.0
        } else {
            (0.0..=1.0).contains(&v)
        };
        if !in_range {
            let range = if min_exclusive { "(0, 1]" } else { "[0, 1]" };
            self.push(path, ViolationKind::RangeViolation, format!("{raw} outside {range}"));
            return None;
        }
        Some(v)
    }

    fn text(&mut self, value: &Value, path: String) -> Option<String> {
        match value.as_str() {
            Some("") => {
                self.push(path, ViolationKind::RangeViolation, "text must be non-empty");
                None
            }
            Some(s) => Some(s.to_string()),
            None => {
                self.mismatch(path, "string", value);
                None
            }
        }
    }

    fn document(&mut self, value: &Value) -> Option<VideoTwin> {
        let root = self.object(value, "")?;
        let frame_count = self.unsigned(root, "", "frame_count");
        if frame_count == Some(0) {
            self.push(
                "frame_count".into(),
                ViolationKind::RangeViolation,
                "frame_count must be at least 1",
            );
        }
        let metadata = match root.get("metadata") {
            None | Some(Value::Null) => Some(BTreeMap::new()),
            Some(meta) => self.metadata(meta),
        };
        let frames = self.field(root, "", "frames").and_then(|frames| {
            let Some(list) = frames.as_array() else {
                self.mismatch("frames".into(), "array", frames);
                return None;
            };
            if let Some(count) = frame_count {
                if list.len() as u64 != count {
                    self.push(
                        "frames".into(),
                        ViolationKind::RangeViolation,
                        format!("{} frames listed but frame_count is {count}", list.len()),
                    );
                }
            }
            let parsed: Vec<Option<FrameTwin>> = list.iter().enumerate().map(|(t, f)| self.frame(f, t)).collect();
            parsed.into_iter().collect::<Option<Vec<_>>>()
        });
        if !self.violations.is_empty() {
            return None;
        }
        let mut twin = VideoTwin {
            frame_count: frame_count? as usize,
            frames: frames?,
            metadata: metadata?,
        };
        twin.canonicalize();
        Some(twin)
    }

    fn metadata(&mut self, value: &Value) -> Option<BTreeMap<String, String>> {
        let obj = self.object(value, "metadata")?;
        let mut out = BTreeMap::new();
        let mut ok = true;
        for (key, v) in obj {
            match v.as_str() {
                Some(s) => {
                    out.insert(key.clone(), s.to_string());
                }
                None => {
                    self.mismatch(format!("metadata.{key}"), "string", v);
                    ok = false;
                }
            }
        }
        ok.then_some(out)
    }

    fn frame(&mut self, value: &Value, position: usize) -> Option<FrameTwin> {
        let path = format!("frames[{position}]");
        let obj = self.object(value, &path)?;
        let index = self.unsigned(obj, &path, "frame_index");
        if let Some(index) = index {
            if index != position as u64 {
                self.push(
                    join(&path, "frame_index"),
                    ViolationKind::RangeViolation,
                    format!("frame_index {index} at position {position}"),
                );
            }
        }
        let instances = self.field(obj, &path, "instances").and_then(|list| {
            let ipath = join(&path, "instances");
            let Some(list) = list.as_array() else {
                self.mismatch(ipath, "array", list);
                return None;
            };
            let mut seen = HashSet::new();
            let mut out = Vec::with_capacity(list.len());
            let mut ok = true;
            for (i, inst) in list.iter().enumerate() {
                let ipath = format!("{ipath}[{i}]");
                match self.instance(inst, &ipath) {
                    Some(o) => {
                        if !seen.insert(o.id) {
                            self.push(
                                join(&ipath, "id"),
                                ViolationKind::IdConflict,
                                format!("id {} appears twice in frame {position}", o.id),
                            );
                            ok = false;
                        }
                        out.push(o);
                    }
                    None => ok = false,
                }
            }
            ok.then_some(out)
        });
        Some(FrameTwin {
            frame_index: index? as usize,
            instances: instances?,
        })
    }

    fn instance(&mut self, value: &Value, path: &str) -> Option<ObjectInstance> {
        let obj = self.object(value, path)?;
        let id = self.unsigned(obj, path, "id");
        let category = self
            .field(obj, path, "category")
            .and_then(|v| self.text(v, join(path, "category")));
        let attributes = self.field(obj, path, "attributes").and_then(|v| {
            let apath = join(path, "attributes");
            let Some(list) = v.as_array() else {
                self.mismatch(apath, "array", v);
                return None;
            };
            let items: Vec<Option<String>> = list
                .iter()
                .enumerate()
                .map(|(k, a)| self.text(a, format!("{apath}[{k}]")))
                .collect();
            items.into_iter().collect::<Option<Vec<_>>>()
        });
        let mask_ref = self
            .field(obj, path, "mask_ref")
            .and_then(|v| self.mask_ref(v, &join(path, "mask_ref")));
        let spatial = self.field(obj, path, "spatial").and_then(|v| {
            let spath = join(path, "spatial");
            let s = self.object(v, &spath)?;
            let x = self.number(s, &spath, "x", false);
            let y = self.number(s, &spath, "y", false);
            let depth = self.number(s, &spath, "depth", false);
            let size = self.number(s, &spath, "size", true);
            Some(SpatialProps {
                x: x?,
                y: y?,
                depth: depth?,
                size: size?,
            })
        });
        Some(ObjectInstance {
            id: id?,
            category: category?,
            attributes: attributes?,
            mask_ref: mask_ref?,
            spatial: spatial?,
        })
    }

    fn mask_ref(&mut self, value: &Value, path: &str) -> Option<MaskRef> {
        match value {
            Value::String(_) => self.text(value, path.to_string()).map(MaskRef::Path),
            Value::Object(obj) => {
                let width = self.unsigned(obj, path, "width");
                let height = self.unsigned(obj, path, "height");
                let rle = self.field(obj, path, "rle").and_then(|v| {
                    let rpath = join(path, "rle");
                    let Some(list) = v.as_array() else {
                        self.mismatch(rpath, "array", v);
                        return None;
                    };
                    let runs: Vec<Option<u64>> = list
                        .iter()
                        .enumerate()
                        .map(|(k, r)| match r.as_u64() {
                            Some(n) => Some(n),
                            None => {
                                self.mismatch(format!("{rpath}[{k}]"), "non-negative integer", r);
                                None
                            }
                        })
                        .collect();
                    runs.into_iter().collect::<Option<Vec<_>>>()
                });
                let (width, height, rle) = (width?, height?, rle?);
                let (Ok(width), Ok(height)) = (u32::try_from(width), u32::try_from(height)) else {
                    self.push(
                        path.to_string(),
                        ViolationKind::RangeViolation,
                        "mask dimensions too large",
                    );
                    return None;
                };
                let mask = RleMask { rle, width, height };
                if let Err(e) = mask.check() {
                    self.push(join(path, "rle"), ViolationKind::RangeViolation, e.to_string());
                    return None;
                }
                Some(MaskRef::Inline(mask))
            }
            other => {
                self.mismatch(path.to_string(), "string or RLE object", other);
                None
            }
        }
    }
}
