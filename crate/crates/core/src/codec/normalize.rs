//! Character unification for raw Persian text.

/// Base letters for the Arabic Presentation Forms-B single-letter block
/// (U+FE80..=U+FEF4) and how many contextual forms each one has.
const FORMS_B: [(char, u32); 36] = [
    ('\u{0621}', 1),
    ('\u{0622}', 2),
    ('\u{0623}', 2),
    ('\u{0624}', 2),
    ('\u{0625}', 2),
    ('\u{0626}', 4),
    ('\u{0627}', 2),
    ('\u{0628}', 4),
    ('\u{0629}', 2),
    ('\u{062A}', 4),
    ('\u{062B}', 4),
    ('\u{062C}', 4),
    ('\u{062D}', 4),
    ('\u{062E}', 4),
    ('\u{062F}', 2),
    ('\u{0630}', 2),
    ('\u{0631}', 2),
    ('\u{0632}', 2),
    ('\u{0633}', 4),
    ('\u{0634}', 4),
    ('\u{0635}', 4),
    ('\u{0636}', 4),
    ('\u{0637}', 4),
    ('\u{0638}', 4),
    ('\u{0639}', 4),
    ('\u{063A}', 4),
    ('\u{0641}', 4),
    ('\u{0642}', 4),
    ('\u{0643}', 4),
    ('\u{0644}', 4),
    ('\u{0645}', 4),
    ('\u{0646}', 4),
    ('\u{0647}', 4),
    ('\u{0648}', 2),
    ('\u{0649}', 2),
    ('\u{064A}', 4),
];

fn presentation_form_b(ch: char) -> Option<char> {
    let code = u32::from(ch);
    if !(0xFE80..=0xFEF4).contains(&code) {
        return None;
    }
    let mut offset = code - 0xFE80;
    for (base, forms) in FORMS_B {
        if offset < forms {
            return Some(base);
        }
        offset -= forms;
    }
    None
}

/// Persian letters from Presentation Forms-A.
fn presentation_form_a(ch: char) -> Option<char> {
    match u32::from(ch) {
        0xFB56..=0xFB59 => Some('\u{067E}'), // peh
        0xFB7A..=0xFB7D => Some('\u{0686}'), // tcheh
        0xFB8A..=0xFB8B => Some('\u{0698}'), // jeh
        0xFB8E..=0xFB91 => Some('\u{06A9}'), // keheh
        0xFB92..=0xFB95 => Some('\u{06AF}'), // gaf
        0xFBFC..=0xFBFF => Some('\u{06CC}'), // farsi yeh
        _ => None,
    }
}

/// Maps one character to its canonical Persian form. Always 1:1.
fn canonical_char(ch: char) -> char {
    let ch = presentation_form_b(ch).or_else(|| presentation_form_a(ch)).unwrap_or(ch);
    match ch {
        '\u{0643}' => '\u{06A9}',              // arabic kaf -> keheh
        '\u{064A}' | '\u{0649}' => '\u{06CC}', // arabic yeh, alef maksura -> farsi yeh
        '\u{0660}'..='\u{0669}' => {
            // arabic-indic digits -> extended arabic-indic (persian) digits
            char::from_u32(u32::from(ch) - 0x0660 + 0x06F0).expect("digit range")
        }
        _ => ch,
    }
}

/// Unifies Arabic variants to Persian forms, unifies digits and collapses
/// whitespace runs to a single space (trimmed at both ends).
///
/// Zero-width non-joiner is not whitespace and is kept as is. Every
/// substitution is one character for one character, so the output never
/// has more characters than the input.
pub fn normalize_persian(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.chars() {
        if ch.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(canonical_char(ch));
    }
    out
}
