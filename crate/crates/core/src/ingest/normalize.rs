//! Text cleanup applied to every extracted document before chunking.

use std::sync::LazyLock;

use regex::Regex;

static BLOCK_TAG: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)</?(?:p|div|h[1-6]|li|ul|ol|tr|table|section|article|header|footer|blockquote)\b[^<>]*>")
        .expect("block tag pattern")
});
static BREAK_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)<br\s*/?>").expect("break tag pattern"));
static ANY_TAG: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?s)<!--.*?-->|</?[A-Za-z][A-Za-z0-9:-]*(?:\s[^<>]*)?/?>").expect("tag pattern")
});
static ENTITY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"&(?:#[0-9]{1,7}|#[xX][0-9a-fA-F]{1,6}|[A-Za-z][A-Za-z0-9]{1,7});")
        .expect("entity pattern")
});
static MANY_NEWLINES: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\n{3,}").expect("newline pattern"));

fn named_entity(name: &str) -> Option<char> {
    Some(match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => '\u{a0}',
        "ndash" => '\u{2013}',
        "mdash" => '\u{2014}',
        "lsquo" => '\u{2018}',
        "rsquo" => '\u{2019}',
        "ldquo" => '\u{201c}',
        "rdquo" => '\u{201d}',
        "hellip" => '\u{2026}',
        "bull" => '\u{2022}',
        "middot" => '\u{b7}',
        "copy" => '\u{a9}',
        "reg" => '\u{ae}',
        "trade" => '\u{2122}',
        "deg" => '\u{b0}',
        "plusmn" => '\u{b1}',
        "times" => '\u{d7}',
        "micro" => '\u{b5}',
        "sect" => '\u{a7}',
        "para" => '\u{b6}',
        _ => return None,
    })
}

/// Decodes named and numeric character references. Unknown names are left verbatim.
pub fn decode_entities(text: &str) -> String {
    ENTITY
        .replace_all(text, |caps: &regex::Captures<'_>| {
            let whole = &caps[0];
            let body = &whole[1..whole.len() - 1];
            let decoded = if let Some(num) = body.strip_prefix('#') {
                let code = match num.strip_prefix(['x', 'X']) {
                    Some(hex) => u32::from_str_radix(hex, 16).ok(),
                    None => num.parse::<u32>().ok(),
                };
                code.and_then(char::from_u32)
            } else {
                named_entity(body)
            };
            match decoded {
                Some(c) => c.to_string(),
                None => whole.to_string(),
            }
        })
        .into_owned()
}

fn strip_markup(text: &str) -> String {
    let text = BREAK_TAG.replace_all(text, "\n");
    let text = BLOCK_TAG.replace_all(&text, "\n\n");
    ANY_TAG.replace_all(&text, "").into_owned()
}

fn drop_control_chars(text: &str) -> String {
    text.chars()
        .filter(|&c| c == '\n' || c == '\t' || !c.is_control())
        .collect()
}

/// Cleans extracted text: markup removed, entities decoded, control characters
/// dropped, horizontal whitespace collapsed, at most one blank line between
/// paragraphs, ends trimmed. `normalize(normalize(t)) == normalize(t)`.
pub fn normalize(text: &str) -> String {
    let mut current = text.replace("\r\n", "\n").replace('\r', "\n");
    // Decoding can expose new markup and stripping can splice new entities
    // together, so iterate to a fixed point. Every productive pass shortens
    // the text, which bounds the loop.
    loop {
        let next = drop_control_chars(&strip_markup(&decode_entities(&current)));
        if next == current {
            break;
        }
        current = next;
    }

    let mut lines = Vec::new();
    for line in current.split('\n') {
        let mut out = String::with_capacity(line.len());
        let mut pending_space = false;
        for c in line.chars() {
            if c.is_whitespace() {
                pending_space = true;
            } else {
                if pending_space && !out.is_empty() {
                    out.push(' ');
                }
                pending_space = false;
                out.push(c);
            }
        }
        lines.push(out);
    }
    let joined = lines.join("\n");
    MANY_NEWLINES
        .replace_all(&joined, "\n\n")
        .trim_matches('\n')
        .to_string()
}
