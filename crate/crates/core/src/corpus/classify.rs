use serde::{Deserialize, Serialize};

use super::language::LanguageProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineClass {
    /// Contains at least one non-whitespace character outside comments.
    Code,
    /// Non-blank, and every non-whitespace character lies in a comment.
    Comment,
    Blank,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineCounts {
    pub physical: u64,
    pub code: u64,
    pub comment: u64,
    pub blank: u64,
}

impl LineCounts {
    fn record(&mut self, class: LineClass) {
        self.physical += 1;
        match class {
            LineClass::Code => self.code += 1,
            LineClass::Comment => self.comment += 1,
            LineClass::Blank => self.blank += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub classes: Vec<LineClass>,
    pub counts: LineCounts,
    /// A block comment was still open at end of input.
    pub unterminated_block: bool,
}

/// One line split into its comment text and its code text.
///
/// `code` has comments removed and string literal contents blanked to
/// spaces (delimiters kept), so brace counting and call matching see only
/// real code. `comment` holds the comment characters of the line, markers
/// included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineDetail {
    pub class: LineClass,
    pub code: String,
    pub comment: String,
}

/// Classifies every line of `content` as code, comment or blank.
pub fn classify_lines(content: &str, profile: &LanguageProfile) -> Classification {
    let mut scanner = Scanner::new(profile);
    let mut classes = Vec::new();
    let mut counts = LineCounts::default();
    for line in content.lines() {
        let class = scanner.scan_line(line, None);
        counts.record(class);
        classes.push(class);
    }
    Classification {
        classes,
        counts,
        unterminated_block: scanner.in_block(),
    }
}

/// Like [`classify_lines`] but also returns the code and comment text of
/// every line. The second element reports an unterminated block comment.
pub fn analyze_lines(content: &str, profile: &LanguageProfile) -> (Vec<LineDetail>, bool) {
    let mut scanner = Scanner::new(profile);
    let details = content
        .lines()
        .map(|line| {
            let mut text = LineText::default();
            let class = scanner.scan_line(line, Some(&mut text));
            LineDetail {
                class,
                code: text.code,
                comment: text.comment,
            }
        })
        .collect();
    (details, scanner.in_block())
}

#[derive(Default)]
struct LineText {
    code: String,
    comment: String,
}

#[derive(Clone, Copy)]
enum State {
    Normal,
    /// Inside the block comment opened by pair `n`.
    Block(usize),
    Str(char),
}

struct Scanner<'p> {
    profile: &'p LanguageProfile,
    state: State,
}

impl<'p> Scanner<'p> {
    fn new(profile: &'p LanguageProfile) -> Self {
        Scanner {
            profile,
            state: State::Normal,
        }
    }

    fn in_block(&self) -> bool {
        matches!(self.state, State::Block(_))
    }

    fn scan_line(&mut self, line: &str, mut text: Option<&mut LineText>) -> LineClass {
        let mut has_code = false;
        let mut has_comment = false;
        let mut i = 0;

        while i < line.len() {
            let rest = &line[i..];
            match self.state {
                State::Block(pair) => {
                    let close = self.profile.block_comment_pairs[pair].1.as_str();
                    if rest.starts_with(close) {
                        has_comment = true;
                        if let Some(t) = text.as_deref_mut() {
                            t.comment.push_str(close);
                        }
                        i += close.len();
                        self.state = State::Normal;
                    } else {
                        let ch = next_char(rest);
                        has_comment |= !ch.is_whitespace();
                        if let Some(t) = text.as_deref_mut() {
                            t.comment.push(ch);
                        }
                        i += ch.len_utf8();
                    }
                }
                State::Str(delim) => {
                    let ch = next_char(rest);
                    has_code |= !ch.is_whitespace();
                    i += ch.len_utf8();
                    if ch == delim {
                        self.state = State::Normal;
                        if let Some(t) = text.as_deref_mut() {
                            t.code.push(ch);
                        }
                    } else if ch == '\\' {
                        // escape consumes the next character, never the line end
                        let mut blanked = 1;
                        if let Some(esc) = line[i..].chars().next() {
                            i += esc.len_utf8();
                            blanked += 1;
                        }
                        if let Some(t) = text.as_deref_mut() {
                            t.code.extend(std::iter::repeat_n(' ', blanked));
                        }
                    } else if let Some(t) = text.as_deref_mut() {
                        t.code.push(' ');
                    }
                }
                State::Normal => {
                    if self
                        .profile
                        .line_comment_markers
                        .iter()
                        .any(|m| rest.starts_with(m.as_str()))
                    {
                        has_comment = true;
                        if let Some(t) = text.as_deref_mut() {
                            t.comment.push_str(rest);
                        }
                        break;
                    }
                    if let Some(pair) = self
                        .profile
                        .block_comment_pairs
                        .iter()
                        .position(|(open, _)| rest.starts_with(open.as_str()))
                    {
                        let open = self.profile.block_comment_pairs[pair].0.as_str();
                        has_comment = true;
                        if let Some(t) = text.as_deref_mut() {
                            t.comment.push_str(open);
                        }
                        i += open.len();
                        self.state = State::Block(pair);
                        continue;
                    }
                    let ch = next_char(rest);
                    has_code |= !ch.is_whitespace();
                    if self.profile.string_delimiters.contains(&ch) {
                        self.state = State::Str(ch);
                    }
                    if let Some(t) = text.as_deref_mut() {
                        t.code.push(ch);
                    }
                    i += ch.len_utf8();
                }
            }
        }

        // string literals do not continue past the end of a line
        if let State::Str(_) = self.state {
            self.state = State::Normal;
        }

        if has_code {
            LineClass::Code
        } else if has_comment {
            LineClass::Comment
        } else {
            LineClass::Blank
        }
    }
}

fn next_char(s: &str) -> char {
    s.chars().next().expect("caller checked non-empty")
}
