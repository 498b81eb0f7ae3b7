//! Deliberately simple reference classifier.
//!
//! Walks the whole text as one char vector with an explicit mode, looking
//! ahead by index comparison. Slow, but small enough to check by eye.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaiveClass {
    Code,
    Comment,
    Blank,
}

#[derive(Debug, Clone)]
pub struct Syntax {
    pub line_markers: Vec<String>,
    pub block_pairs: Vec<(String, String)>,
    pub string_delims: Vec<char>,
}

impl Syntax {
    pub fn c() -> Self {
        Syntax {
            line_markers: vec!["//".into()],
            block_pairs: vec![("/*".into(), "*/".into())],
            string_delims: vec!['"', '\''],
        }
    }

    pub fn sql() -> Self {
        Syntax {
            line_markers: vec!["--".into()],
            block_pairs: vec![("/*".into(), "*/".into())],
            string_delims: vec!['\'', '"'],
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Code,
    LineComment,
    Block(usize),
    Str(char),
}

fn at(chars: &[char], i: usize, pat: &str) -> bool {
    let p: Vec<char> = pat.chars().collect();
    i + p.len() <= chars.len() && chars[i..i + p.len()] == p[..]
}

pub fn naive_classify(text: &str, syntax: &Syntax) -> Vec<NaiveClass> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut mode = Mode::Code;
    let (mut code, mut comment, mut any) = (false, false, false);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            out.push(if code {
                NaiveClass::Code
            } else if comment {
                NaiveClass::Comment
            } else {
                NaiveClass::Blank
            });
            code = false;
            comment = false;
            any = false;
            if matches!(mode, Mode::LineComment | Mode::Str(_)) {
                mode = Mode::Code;
            }
            i += 1;
            continue;
        }
        any = true;
        match mode {
            Mode::LineComment => {
                i += 1;
            }
            Mode::Block(k) => {
                let close = &syntax.block_pairs[k].1;
                if at(&chars, i, close) {
                    comment = true;
                    mode = Mode::Code;
                    i += close.chars().count();
                } else {
                    if !c.is_whitespace() {
                        comment = true;
                    }
                    i += 1;
                }
            }
            Mode::Str(d) => {
                if !c.is_whitespace() {
                    code = true;
                }
                if c == d {
                    mode = Mode::Code;
                    i += 1;
                } else if c == '\\' {
                    // skip the escaped char unless it ends the line
                    i += if i + 1 < chars.len() && chars[i + 1] != '\n' {
                        2
                    } else {
                        1
                    };
                } else {
                    i += 1;
                }
            }
            Mode::Code => {
                if syntax.line_markers.iter().any(|m| at(&chars, i, m)) {
                    comment = true;
                    mode = Mode::LineComment;
                    i += 1;
                } else if let Some(k) = syntax
                    .block_pairs
                    .iter()
                    .position(|(o, _)| at(&chars, i, o))
                {
                    comment = true;
                    mode = Mode::Block(k);
                    i += syntax.block_pairs[k].0.chars().count();
                } else {
                    if !c.is_whitespace() {
                        code = true;
                    }
                    if syntax.string_delims.contains(&c) {
                        mode = Mode::Str(c);
                    }
                    i += 1;
                }
            }
        }
    }
    if any {
        out.push(if code {
            NaiveClass::Code
        } else if comment {
            NaiveClass::Comment
        } else {
            NaiveClass::Blank
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use NaiveClass::*;

    #[test]
    fn basics() {
        let s = Syntax::c();
        assert_eq!(naive_classify("", &s), vec![]);
        assert_eq!(naive_classify("\n", &s), vec![Blank]);
        assert_eq!(
            naive_classify("x;\n// c\n\n/* a\n b */ y", &s),
            vec![Code, Comment, Blank, Comment, Code]
        );
        assert_eq!(naive_classify("s=\"/*\";", &s), vec![Code]);
        assert_eq!(naive_classify("\"\\\n/* x */", &s), vec![Code, Comment]);
    }
}
