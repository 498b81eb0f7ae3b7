//! Seeded random source text built from comment and string fragments.

use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenProfile {
    C,
    Sql,
}

const C_TOKENS: &[&str] = &[
    "int",
    "x",
    "=",
    "y",
    ";",
    "{",
    "}",
    "(",
    ")",
    "*",
    "/",
    "-",
    "+",
    "memcpy(a, b, n)",
    "free(p)",
    "\\",
    "#include",
];
const SQL_TOKENS: &[&str] = &[
    "SELECT", "a", "FROM", "t", "WHERE", "-", "=", "1", ";", "*", "/", "EXEC(@s)",
];
const STRING_BODY: &[&str] = &[
    "abc", "//", "/*", "*/", "--", "\\\"", "\\'", "\\\\", "\\", " ", "'", "\"", "x",
];
const WS: &[&str] = &[" ", "  ", "\t", ""];

fn fragment<R: Rng>(rng: &mut R, profile: GenProfile) -> String {
    let tokens = match profile {
        GenProfile::C => C_TOKENS,
        GenProfile::Sql => SQL_TOKENS,
    };
    let line_marker = match profile {
        GenProfile::C => "//",
        GenProfile::Sql => "--",
    };
    match rng.gen_range(0..100) {
        0..=39 => tokens.choose(rng).unwrap().to_string(),
        40..=49 => WS.choose(rng).unwrap().to_string(),
        50..=59 => "\n".to_string(),
        60..=71 => {
            let q = if rng.gen_bool(0.5) { '"' } else { '\'' };
            let mut s = String::from(q);
            for _ in 0..rng.gen_range(0..4) {
                s.push_str(STRING_BODY.choose(rng).unwrap());
            }
            // sometimes leave the literal open
            if rng.gen_bool(0.85) {
                s.push(q);
            }
            s
        }
        72..=81 => format!(
            "{line_marker} {}",
            ["TODO", "note", "*/", "/*", "\"", "x"].choose(rng).unwrap()
        ),
        82..=93 => {
            let mut s = String::from("/*");
            for _ in 0..rng.gen_range(0..5) {
                s.push_str(
                    ["a", " ", "\n", "*", "/", "//", "--", "\"", "\n\n", "  \t"]
                        .choose(rng)
                        .unwrap(),
                );
            }
            if rng.gen_bool(0.9) {
                s.push_str("*/");
            }
            s
        }
        94..=96 => "\r\n".to_string(),
        _ => ["é", "∑", "/*/", "*/", "**/"]
            .choose(rng)
            .unwrap()
            .to_string(),
    }
}

/// Random text of roughly `fragments` pieces. Comment openers, string
/// delimiters, escapes and line ends are mixed freely, including
/// unterminated literals and comments.
pub fn random_source<R: Rng>(rng: &mut R, profile: GenProfile, fragments: usize) -> String {
    let mut out = String::new();
    for _ in 0..fragments {
        out.push_str(&fragment(rng, profile));
    }
    if rng.gen_bool(0.5) {
        out.push('\n');
    }
    out
}
