//! Grounded response grammar.
//!
//! A grounded response is plain text interleaved with entity groups of the
//! form `<p>phrase<SEG></p>`. Each group binds its phrase to one mask slot;
//! slots are numbered 0, 1, 2, ... in order of appearance.
//!
//! Canonical grammar (strict mode):
//!
//! ```text
//! response := ( plain | "<p>" phrase "<SEG>" "</p>" )*
//! ```
//!
//! Lenient mode additionally accepts `"<p>" phrase "</p>" "<SEG>"` and
//! recovers from the non-fatal diagnostics listed on [`DiagnosticKind`].

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub const OPEN: &str = "<p>";
pub const CLOSE: &str = "</p>";
pub const SEG: &str = "<SEG>";

/// True if `s` contains any of the three marker strings.
pub fn contains_marker(s: &str) -> bool {
    s.contains(OPEN) || s.contains(CLOSE) || s.contains(SEG)
}

/// True if `a + b` contains a marker that neither part contains alone.
fn splices_marker(a: &str, b: &str) -> bool {
    if a.is_empty() || b.is_empty() {
        return false;
    }
    let mut start = a.len().saturating_sub(SEG.len() - 1);
    while !a.is_char_boundary(start) {
        start -= 1;
    }
    let end = b
        .char_indices()
        .nth(SEG.len() - 1)
        .map_or(b.len(), |(i, _)| i);
    let mut joint = String::from(&a[start..]);
    joint.push_str(&b[..end]);
    contains_marker(&joint)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Entity {
    phrase: String,
    slot: usize,
}

impl Entity {
    pub fn phrase(&self) -> &str {
        &self.phrase
    }

    pub fn slot(&self) -> usize {
        self.slot
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Segment {
    Text(String),
    Entity(Entity),
}

/// Why a segment could not be added to a [`GroundedResponse`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BuildError {
    #[error("entity phrase is empty")]
    EmptyPhrase,
    #[error("text contains a grounding marker")]
    ContainsMarker,
}

/// Parsed grounded response.
///
/// Adjacent plain-text runs are always merged and empty text is never stored,
/// so two responses that serialize to the same string compare equal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct GroundedResponse {
    segments: Vec<Segment>,
    entity_count: usize,
}

impl GroundedResponse {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn push_text(&mut self, text: &str) -> Result<(), BuildError> {
        if contains_marker(text) {
            return Err(BuildError::ContainsMarker);
        }
        if self.joins_into_marker(text) {
            return Err(BuildError::ContainsMarker);
        }
        self.push_text_unchecked(text);
        Ok(())
    }

    /// Appends an entity and returns its slot.
    pub fn push_entity(&mut self, phrase: &str) -> Result<usize, BuildError> {
        if phrase.is_empty() {
            return Err(BuildError::EmptyPhrase);
        }
        if contains_marker(phrase) {
            return Err(BuildError::ContainsMarker);
        }
        Ok(self.push_entity_unchecked(phrase))
    }

    /// True if appending `text` would merge with the trailing text run into
    /// a marker ("a<" + "p>b").
    fn joins_into_marker(&self, text: &str) -> bool {
        match self.segments.last() {
            Some(Segment::Text(last)) => splices_marker(last, text),
            _ => false,
        }
    }

    fn push_text_unchecked(&mut self, text: &str) {
        if text.is_empty() {
            return;
        }
        if let Some(Segment::Text(last)) = self.segments.last_mut() {
            last.push_str(text);
        } else {
            self.segments.push(Segment::Text(text.into()));
        }
    }

    fn push_entity_unchecked(&mut self, phrase: &str) -> usize {
        let slot = self.entity_count;
        self.segments.push(Segment::Entity(Entity {
            phrase: phrase.into(),
            slot,
        }));
        self.entity_count += 1;
        slot
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Entity(e) => Some(e),
            Segment::Text(_) => None,
        })
    }

    /// `(phrase, slot)` pairs in appearance order.
    pub fn extract_entities(&self) -> Vec<(String, usize)> {
        self.entities()
            .map(|e| (e.phrase.clone(), e.slot))
            .collect()
    }

    /// Plain text with all markers removed and nothing else changed.
    pub fn strip_markup(&self) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Entity(e) => out.push_str(&e.phrase),
            }
        }
        out
    }

    /// Canonical wire form.
    pub fn serialize(&self) -> String {
        alloc::format!("{self}")
    }
}

impl fmt::Display for GroundedResponse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => f.write_str(t)?,
                Segment::Entity(e) => write!(f, "{OPEN}{}{SEG}{CLOSE}", e.phrase)?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagnosticKind {
    /// `</p>` without an open phrase, or input ends inside a phrase. Fatal.
    UnbalancedTag,
    /// `<p>x</p><SEG>`: the segmentation token follows the close tag.
    SegOutsidePhrase,
    /// `<p>` inside an open phrase. Fatal.
    NestedPhrase,
    /// `<p><SEG></p>` or `<p></p>`.
    EmptyPhrase,
    /// `<SEG>` not attached to any phrase, a repeated `<SEG>`, text between
    /// `<SEG>` and `</p>`, or a phrase closed without any `<SEG>`.
    StrayMarker,
    /// Dropping a stray marker would join the text around it into a new
    /// marker, as in `</<SEG>p>`. Fatal.
    SplicedMarker,
}

impl DiagnosticKind {
    pub fn is_fatal_in_lenient(self) -> bool {
        matches!(
            self,
            Self::UnbalancedTag | Self::NestedPhrase | Self::SplicedMarker
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::UnbalancedTag => "UnbalancedTag",
            Self::SegOutsidePhrase => "SegOutsidePhrase",
            Self::NestedPhrase => "NestedPhrase",
            Self::EmptyPhrase => "EmptyPhrase",
            Self::StrayMarker => "StrayMarker",
            Self::SplicedMarker => "SplicedMarker",
        }
    }
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParseDiagnostic {
    pub kind: DiagnosticKind,
    /// Byte offset of the marker that triggered the diagnostic.
    pub byte_offset: usize,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at byte {}", self.kind, self.byte_offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

/// Parse failure carrying every diagnostic found.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("grounded response rejected with {} diagnostic(s)", .diagnostics.len())]
pub struct ParseError {
    pub diagnostics: Vec<ParseDiagnostic>,
}

/// Result of a parse that may succeed with warnings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseOutcome {
    pub response: Option<GroundedResponse>,
    pub diagnostics: Vec<ParseDiagnostic>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Marker {
    Open,
    Close,
    Seg,
}

impl Marker {
    fn len(self) -> usize {
        match self {
            Marker::Open => OPEN.len(),
            Marker::Close => CLOSE.len(),
            Marker::Seg => SEG.len(),
        }
    }
}

fn marker_at(bytes: &[u8], i: usize) -> Option<Marker> {
    let rest = &bytes[i..];
    if rest.starts_with(OPEN.as_bytes()) {
        Some(Marker::Open)
    } else if rest.starts_with(CLOSE.as_bytes()) {
        Some(Marker::Close)
    } else if rest.starts_with(SEG.as_bytes()) {
        Some(Marker::Seg)
    } else {
        None
    }
}

struct OpenPhrase {
    open_at: usize,
    text: String,
    seg_at: Option<usize>,
    /// Text appeared after the first `<SEG>`.
    trailing_text: bool,
}

/// Parses `text` and returns every diagnostic, plus the response when the
/// mode tolerates the diagnostics found.
pub fn parse_report(text: &str, mode: ParseMode) -> ParseOutcome {
    let bytes = text.as_bytes();
    let mut diags = Vec::new();
    let mut out = GroundedResponse::new();
    let mut open: Option<OpenPhrase> = None;
    let mut fatal = false;
    let mut i = 0;
    let mut plain_start = 0;

    // All markers are ASCII and start with '<', so every split point lies on a
    // char boundary.
    while i < bytes.len() {
        let marker = if bytes[i] == b'<' {
            marker_at(bytes, i)
        } else {
            None
        };
        let Some(marker) = marker else {
            i += 1;
            continue;
        };
        let chunk = &text[plain_start..i];
        match open.as_mut() {
            None => {
                if out.joins_into_marker(chunk) {
                    diags.push(diag(DiagnosticKind::SplicedMarker, plain_start));
                    fatal = true;
                }
                out.push_text_unchecked(chunk);
            }
            Some(p) => {
                if !chunk.is_empty() && p.seg_at.is_some() {
                    p.trailing_text = true;
                }
                if splices_marker(&p.text, chunk) {
                    diags.push(diag(DiagnosticKind::SplicedMarker, plain_start));
                    fatal = true;
                }
                p.text.push_str(chunk);
            }
        }
        let at = i;
        i += marker.len();
        plain_start = i;

        match (marker, open.is_some()) {
            (Marker::Open, false) => {
                open = Some(OpenPhrase {
                    open_at: at,
                    text: String::new(),
                    seg_at: None,
                    trailing_text: false,
                });
            }
            (Marker::Open, true) => {
                diags.push(diag(DiagnosticKind::NestedPhrase, at));
                fatal = true;
            }
            (Marker::Seg, true) => {
                let p = open.as_mut().expect("open phrase");
                if p.seg_at.is_some() {
                    diags.push(diag(DiagnosticKind::StrayMarker, at));
                } else {
                    p.seg_at = Some(at);
                }
            }
            (Marker::Seg, false) => {
                diags.push(diag(DiagnosticKind::StrayMarker, at));
            }
            (Marker::Close, false) => {
                diags.push(diag(DiagnosticKind::UnbalancedTag, at));
                fatal = true;
            }
            (Marker::Close, true) => {
                let p = open.take().expect("open phrase");
                let seg_after_close =
                    p.seg_at.is_none() && marker_at(bytes, i).is_some_and(|m| m == Marker::Seg);
                if seg_after_close {
                    diags.push(diag(DiagnosticKind::SegOutsidePhrase, i));
                    i += SEG.len();
                    plain_start = i;
                }
                if p.trailing_text {
                    diags.push(diag(DiagnosticKind::StrayMarker, p.seg_at.unwrap_or(at)));
                }
                let has_seg = p.seg_at.is_some() || seg_after_close;
                if p.text.is_empty() {
                    diags.push(diag(DiagnosticKind::EmptyPhrase, p.open_at));
                } else if has_seg {
                    out.push_entity_unchecked(&p.text);
                } else {
                    // Phrase without a segmentation request; lenient mode
                    // keeps its words as plain text.
                    diags.push(diag(DiagnosticKind::StrayMarker, at));
                    if out.joins_into_marker(&p.text) {
                        diags.push(diag(DiagnosticKind::SplicedMarker, p.open_at));
                        fatal = true;
                    }
                    out.push_text_unchecked(&p.text);
                }
            }
        }
    }

    if let Some(p) = open {
        diags.push(diag(DiagnosticKind::UnbalancedTag, p.open_at));
        fatal = true;
    } else {
        let tail = &text[plain_start..];
        if out.joins_into_marker(tail) {
            diags.push(diag(DiagnosticKind::SplicedMarker, plain_start));
            fatal = true;
        }
        out.push_text_unchecked(tail);
    }

    diags.sort_by_key(|d| d.byte_offset);
    let accept = match mode {
        ParseMode::Strict => diags.is_empty(),
        ParseMode::Lenient => !fatal,
    };
    ParseOutcome {
        response: accept.then_some(out),
        diagnostics: diags,
    }
}

fn diag(kind: DiagnosticKind, byte_offset: usize) -> ParseDiagnostic {
    ParseDiagnostic { kind, byte_offset }
}

/// Parses a grounded response. In strict mode any diagnostic is an error; in
/// lenient mode only the kinds for which
/// [`DiagnosticKind::is_fatal_in_lenient`] holds are.
pub fn parse_grounded(text: &str, mode: ParseMode) -> Result<GroundedResponse, ParseError> {
    let outcome = parse_report(text, mode);
    outcome.response.ok_or(ParseError {
        diagnostics: outcome.diagnostics,
    })
}

impl core::str::FromStr for GroundedResponse {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_grounded(s, ParseMode::Strict)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const EXAMPLE: &str = "<p>The central vein of the adrenal medulla<SEG></p> is located in the \
<p>adrenal medulla<SEG></p> and is a rare type of blood vessel. Its structure is different from \
other veins, in which the <p>smooth muscle<SEG></p> of the membrane is arranged in obvious \
longitudinal bundles.";

    fn kinds(text: &str, mode: ParseMode) -> Vec<DiagnosticKind> {
        parse_report(text, mode)
            .diagnostics
            .iter()
            .map(|d| d.kind)
            .collect()
    }

    #[test]
    fn text_runs_cannot_form_markers_when_merged() {
        let mut r = GroundedResponse::new();
        r.push_text("a<").unwrap();
        assert_eq!(r.push_text("p>b"), Err(BuildError::ContainsMarker));
        r.push_text("<S").unwrap();
        assert_eq!(r.push_text("EG>"), Err(BuildError::ContainsMarker));
        r.push_text("é/").unwrap();
        assert_eq!(r.serialize(), "a<<Sé/");
    }

    #[test]
    fn lenient_refuses_to_splice_markers() {
        for bad in ["</<p>p></p>", "<<SEG>p>x<SEG></p>", "<p>a<<SEG>p>b</p>"] {
            let out = parse_report(bad, ParseMode::Lenient);
            assert!(out.response.is_none(), "{bad}");
            assert!(out
                .diagnostics
                .iter()
                .any(|d| d.kind == DiagnosticKind::SplicedMarker));
        }
    }

    #[test]
    fn worked_example_has_three_entities() {
        let r = parse_grounded(EXAMPLE, ParseMode::Strict).unwrap();
        assert_eq!(r.entity_count(), 3);
        assert_eq!(
            r.extract_entities(),
            vec![
                ("The central vein of the adrenal medulla".into(), 0),
                ("adrenal medulla".into(), 1),
                ("smooth muscle".into(), 2),
            ]
        );
        assert_eq!(r.serialize(), EXAMPLE);
        let oracle = EXAMPLE
            .replace(OPEN, "")
            .replace(CLOSE, "")
            .replace(SEG, "");
        assert_eq!(r.strip_markup(), oracle);
    }

    #[test]
    fn empty_input() {
        let r = parse_grounded("", ParseMode::Strict).unwrap();
        assert!(r.segments().is_empty());
        assert_eq!(r.entity_count(), 0);
        assert_eq!(r.serialize(), "");
        assert_eq!(r.strip_markup(), "");
        assert!(r.extract_entities().is_empty());
    }

    #[test]
    fn single_entity_serializes_canonically() {
        let mut r = GroundedResponse::new();
        assert_eq!(r.push_entity("heart"), Ok(0));
        assert_eq!(r.serialize(), "<p>heart<SEG></p>");
    }

    #[test]
    fn strip_simple() {
        let r: GroundedResponse = "<p>heart<SEG></p> is shown".parse().unwrap();
        assert_eq!(r.strip_markup(), "heart is shown");
    }

    #[test]
    fn lenient_normalizes_seg_after_close() {
        let lenient = parse_grounded("<p>heart</p><SEG> ok", ParseMode::Lenient).unwrap();
        let strict = parse_grounded("<p>heart<SEG></p> ok", ParseMode::Strict).unwrap();
        assert_eq!(lenient, strict);
        assert_eq!(
            kinds("<p>heart</p><SEG> ok", ParseMode::Strict),
            vec![DiagnosticKind::SegOutsidePhrase]
        );
        assert!(parse_grounded("<p>heart</p><SEG> ok", ParseMode::Strict).is_err());
    }

    #[test]
    fn unbalanced_tags() {
        let e = parse_grounded("a </p> b", ParseMode::Lenient).unwrap_err();
        assert_eq!(
            e.diagnostics,
            vec![ParseDiagnostic {
                kind: DiagnosticKind::UnbalancedTag,
                byte_offset: 2
            }]
        );
        let e = parse_grounded("x <p>heart<SEG>", ParseMode::Lenient).unwrap_err();
        assert_eq!(e.diagnostics[0].kind, DiagnosticKind::UnbalancedTag);
        assert_eq!(e.diagnostics[0].byte_offset, 2);
    }

    #[test]
    fn nested_phrase_is_fatal() {
        let e = parse_grounded("<p>a <p>b<SEG></p><SEG></p>", ParseMode::Lenient).unwrap_err();
        assert!(e
            .diagnostics
            .iter()
            .any(|d| d.kind == DiagnosticKind::NestedPhrase && d.byte_offset == 5));
    }

    #[test]
    fn stray_seg_rejected_strict_dropped_lenient() {
        assert_eq!(
            kinds("a <SEG> b", ParseMode::Strict),
            vec![DiagnosticKind::StrayMarker]
        );
        let r = parse_grounded("a <SEG> b", ParseMode::Lenient).unwrap();
        assert_eq!(r.serialize(), "a  b");
        assert_eq!(r.entity_count(), 0);
    }

    #[test]
    fn empty_phrase() {
        assert_eq!(
            kinds("<p><SEG></p>", ParseMode::Strict),
            vec![DiagnosticKind::EmptyPhrase]
        );
        let r = parse_grounded("x<p><SEG></p>y", ParseMode::Lenient).unwrap();
        assert_eq!(r.serialize(), "xy");
    }

    #[test]
    fn phrase_without_seg_becomes_text_in_lenient() {
        assert_eq!(
            kinds("<p>liver</p>.", ParseMode::Strict),
            vec![DiagnosticKind::StrayMarker]
        );
        let r = parse_grounded("<p>liver</p>.", ParseMode::Lenient).unwrap();
        assert_eq!(r.serialize(), "liver.");
    }

    #[test]
    fn text_after_seg_inside_phrase() {
        assert_eq!(
            kinds("<p>left<SEG> kidney</p>", ParseMode::Strict),
            vec![DiagnosticKind::StrayMarker]
        );
        let r = parse_grounded("<p>left<SEG> kidney</p>", ParseMode::Lenient).unwrap();
        assert_eq!(r.extract_entities(), vec![("left kidney".into(), 0)]);
    }

    #[test]
    fn whitespace_in_phrase_preserved() {
        let r: GroundedResponse = "<p> smooth muscle <SEG></p>".parse().unwrap();
        assert_eq!(r.extract_entities()[0].0, " smooth muscle ");
    }

    #[test]
    fn near_markers_are_plain_text() {
        let s = "<P>a</P> <seg> <p <SEG <p/> <<p>x<SEG></p>>";
        let r: GroundedResponse = s.parse().unwrap();
        assert_eq!(r.entity_count(), 1);
        assert_eq!(r.serialize(), s);
    }

    #[test]
    fn diagnostics_offsets_inside_input() {
        for s in [
            "</p>",
            "<p>",
            "<SEG>",
            "<p></p>",
            "<p>a</p><SEG>",
            "<p>a<SEG><SEG></p>",
        ] {
            for d in parse_report(s, ParseMode::Strict).diagnostics {
                assert!(d.byte_offset < s.len(), "{s}: {d}");
            }
        }
    }

    #[test]
    fn builder_rejects_markers() {
        let mut r = GroundedResponse::new();
        assert_eq!(r.push_entity(""), Err(BuildError::EmptyPhrase));
        assert_eq!(r.push_entity("a<SEG>"), Err(BuildError::ContainsMarker));
        assert_eq!(r.push_text("</p>"), Err(BuildError::ContainsMarker));
        r.push_text("a").unwrap();
        r.push_text("b").unwrap();
        assert_eq!(r.segments().len(), 1);
    }
}
