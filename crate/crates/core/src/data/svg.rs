//! SVG export for floorplans and a strict XML well-formedness checker.

use std::fmt::Write as _;

use crate::geometry::{EntityKind, Floorplan};

/// Fill colors cycled by room class.
const PALETTE: [&str; 8] = [
    "#a6cee3", "#b2df8a", "#fdbf6f", "#cab2d6", "#fb9a99", "#ffff99", "#80b1d3", "#ccebc5",
];
const DOOR_COLOR: &str = "#d62728";
const WINDOW_COLOR: &str = "#1f77b4";

fn fmt_num(x: f64) -> String {
    if x == x.trunc() {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// Render a floorplan as a standalone SVG document: one filled, stroked path
/// per room, red door strokes, blue dashed window strokes.
pub fn export_svg(fp: &Floorplan) -> String {
    let mut s = String::new();
    let (w, h) = (fp.width, fp.height);
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>");
    for room in fp.of_kind(EntityKind::Room) {
        let mut d = String::new();
        for (i, c) in room.corners.iter().enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            let _ = write!(d, "{cmd} {} {} ", fmt_num(c[0]), fmt_num(c[1]));
        }
        d.push('Z');
        let fill = PALETTE[room.label % PALETTE.len()];
        let _ = writeln!(
            s,
            "<path d=\"{d}\" fill=\"{fill}\" stroke=\"#222222\" stroke-width=\"1.5\"/>"
        );
    }
    for e in &fp.entities {
        if e.kind == EntityKind::Room || e.corners.len() != 2 {
            continue;
        }
        let (a, b) = (e.corners[0], e.corners[1]);
        let coords = format!(
            "x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\"",
            fmt_num(a[0]),
            fmt_num(a[1]),
            fmt_num(b[0]),
            fmt_num(b[1])
        );
        match e.kind {
            EntityKind::Door => {
                let _ = writeln!(s, "<line {coords} stroke=\"{DOOR_COLOR}\" stroke-width=\"2\"/>");
            }
            EntityKind::Window => {
                let _ = writeln!(
                    s,
                    "<line {coords} stroke=\"{WINDOW_COLOR}\" stroke-width=\"2\" stroke-dasharray=\"4 2\"/>"
                );
            }
            EntityKind::Room => unreachable!(),
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Strict well-formedness check for the XML subset the SVG exporter emits:
/// one declaration, one root element, balanced tags, quoted and unique
/// attributes, valid names, valid entity references, comments. DOCTYPE,
/// CDATA, and processing instructions are rejected.
pub fn validate_xml(doc: &str) -> Result<(), String> {
    let b = doc.as_bytes();
    let mut i = 0usize;
    let fail = |i: usize, m: &str| Err(format!("offset {i}: {m}"));
    let name_start = |c: u8| c.is_ascii_alphabetic() || c == b'_' || c == b':';
    let name_char =
        |c: u8| c.is_ascii_alphanumeric() || matches!(c, b'_' | b':' | b'-' | b'.');

    // Optional XML declaration.
    if b.starts_with(b"<?xml") {
        match doc.find("?>") {
            Some(p) => i = p + 2,
            None => return fail(0, "unterminated XML declaration"),
        }
    }

    let mut stack: Vec<&str> = Vec::new();
    let mut roots = 0usize;
    while i < b.len() {
        if b[i] != b'<' {
            // Character data: no raw '&' except entity refs; '>' is allowed.
            if b[i] == b'&' {
                let end = doc[i..].find(';').map(|p| i + p);
                let ok = end.map_or(false, |e| {
                    let r = &doc[i + 1..e];
                    matches!(r, "amp" | "lt" | "gt" | "quot" | "apos")
                        || (r.len() > 1
                            && r.starts_with('#')
                            && r[1..].chars().all(|c| c.is_ascii_digit()))
                });
                if !ok {
                    return fail(i, "bare '&' is not a valid entity reference");
                }
                i = end.unwrap() + 1;
                continue;
            }
            if stack.is_empty() && !b[i].is_ascii_whitespace() {
                return fail(i, "character data outside the root element");
            }
            i += 1;
            continue;
        }
        // A markup construct begins.
        if doc[i..].starts_with("<!--") {
            let Some(p) = doc[i + 4..].find("-->") else {
                return fail(i, "unterminated comment");
            };
            if doc[i + 4..i + 4 + p].contains("--") {
                return fail(i, "'--' inside a comment");
            }
            i += 4 + p + 3;
            continue;
        }
        if doc[i..].starts_with("<!") || doc[i..].starts_with("<?") {
            return fail(i, "DOCTYPE, CDATA, and processing instructions are not allowed");
        }
        if doc[i..].starts_with("</") {
            let mut j = i + 2;
            let start = j;
            while j < b.len() && name_char(b[j]) {
                j += 1;
            }
            if start == j || !name_start(b[start]) {
                return fail(i, "bad closing tag name");
            }
            let name = &doc[start..j];
            while j < b.len() && b[j].is_ascii_whitespace() {
                j += 1;
            }
            if j >= b.len() || b[j] != b'>' {
                return fail(i, "closing tag not terminated by '>'");
            }
            match stack.pop() {
                Some(open) if open == name => {}
                Some(open) => return fail(i, &format!("</{name}> closes <{open}>")),
                None => return fail(i, "closing tag without an open element"),
            }
            i = j + 1;
            continue;
        }
        // Opening or self-closing tag.
        let mut j = i + 1;
        let start = j;
        while j < b.len() && name_char(b[j]) {
            j += 1;
        }
        if start == j || !name_start(b[start]) {
            return fail(i, "bad element name");
        }
        let name = &doc[start..j];
        let mut attrs: Vec<&str> = Vec::new();
        loop {
            while j < b.len() && b[j].is_ascii_whitespace() {
                j += 1;
            }
            if j >= b.len() {
                return fail(i, "unterminated tag");
            }
            if b[j] == b'>' || doc[j..].starts_with("/>") {
                break;
            }
            let astart = j;
            while j < b.len() && name_char(b[j]) {
                j += 1;
            }
            if astart == j || !name_start(b[astart]) {
                return fail(j, "bad attribute name");
            }
            let aname = &doc[astart..j];
            if attrs.contains(&aname) {
                return fail(astart, &format!("duplicate attribute '{aname}'"));
            }
            attrs.push(aname);
            if j >= b.len() || b[j] != b'=' {
                return fail(j, "attribute without '='");
            }
            j += 1;
            if j >= b.len() || (b[j] != b'"' && b[j] != b'\'') {
                return fail(j, "attribute value must be quoted");
            }
            let quote = b[j];
            j += 1;
            let vstart = j;
            while j < b.len() && b[j] != quote {
                if b[j] == b'<' {
                    return fail(j, "raw '<' in attribute value");
                }
                j += 1;
            }
            if j >= b.len() {
                return fail(vstart, "unterminated attribute value");
            }
            if doc[vstart..j].contains('&') {
                return fail(vstart, "entity references in attribute values are not supported");
            }
            j += 1;
        }
        let self_closing = b[j] == b'/';
        if stack.is_empty() {
            roots += 1;
            if roots > 1 {
                return fail(i, "more than one root element");
            }
        }
        if self_closing {
            j += 2;
        } else {
            stack.push(name);
            j += 1;
        }
        i = j;
    }
    if let Some(open) = stack.pop() {
        return fail(b.len(), &format!("<{open}> is never closed"));
    }
    if roots == 0 {
        return fail(b.len(), "no root element");
    }
    Ok(())
}
