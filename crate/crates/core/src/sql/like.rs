/// A compiled LIKE / ILIKE pattern. `%` matches any run of characters and
/// `_` exactly one character; there is no escape character.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LikePattern {
    pattern: String,
    case_insensitive: bool,
    tokens: Vec<Piece>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Piece {
    Lit(Vec<u8>),
    One,
    Any,
}

impl LikePattern {
    pub fn new(pattern: &str, case_insensitive: bool) -> Self {
        let src = if case_insensitive {
            pattern.to_lowercase()
        } else {
            pattern.to_string()
        };
        let mut tokens = Vec::new();
        let mut lit = Vec::new();
        for ch in src.chars() {
            match ch {
                '%' | '_' => {
                    if !lit.is_empty() {
                        tokens.push(Piece::Lit(std::mem::take(&mut lit)));
                    }
                    let p = if ch == '%' { Piece::Any } else { Piece::One };
                    if !(p == Piece::Any && tokens.last() == Some(&Piece::Any)) {
                        tokens.push(p);
                    }
                }
                c => {
                    let mut buf = [0u8; 4];
                    lit.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
                }
            }
        }
        if !lit.is_empty() {
            tokens.push(Piece::Lit(lit));
        }
        Self {
            pattern: pattern.to_string(),
            case_insensitive,
            tokens,
        }
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn case_insensitive(&self) -> bool {
        self.case_insensitive
    }

    pub fn matches(&self, s: &str) -> bool {
        if self.case_insensitive && s.bytes().any(|b| b.is_ascii_uppercase() || b >= 0x80) {
            let lower = s.to_lowercase();
            return match_pieces(&self.tokens, lower.as_bytes());
        }
        match_pieces(&self.tokens, s.as_bytes())
    }
}

fn char_len(b: u8) -> usize {
    match b {
        0x00..=0x7f => 1,
        0xc0..=0xdf => 2,
        0xe0..=0xef => 3,
        _ => 4,
    }
}

fn match_pieces(pieces: &[Piece], s: &[u8]) -> bool {
    // position in pieces, position in s, and the last `%` to backtrack to
    let (mut pi, mut si) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    loop {
        if pi < pieces.len() {
            match &pieces[pi] {
                Piece::Any => {
                    star = Some((pi, si));
                    pi += 1;
                    continue;
                }
                Piece::One if si < s.len() => {
                    si += char_len(s[si]);
                    pi += 1;
                    continue;
                }
                Piece::Lit(l) if s[si..].starts_with(l) => {
                    si += l.len();
                    pi += 1;
                    continue;
                }
                _ => {}
            }
        } else if si == s.len() {
            return true;
        }
        match star {
            Some((sp, ss)) if ss < s.len() => {
                let next = ss + char_len(s[ss]);
                star = Some((sp, next));
                pi = sp + 1;
                si = next;
            }
            _ => return false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ilike_substring() {
        let p = LikePattern::new("%godfather%", true);
        assert!(p.matches("The Godfather"));
        assert!(p.matches("GODFATHER II"));
        assert!(!p.matches("Goodfellas"));
    }

    #[test]
    fn wildcards() {
        let p = LikePattern::new("a_c%", false);
        assert!(p.matches("abc"));
        assert!(p.matches("aécdef"));
        assert!(!p.matches("ac"));
        assert!(!p.matches("Abc"));
        assert!(LikePattern::new("%", false).matches(""));
        assert!(LikePattern::new("%a%b", false).matches("xxaxxab"));
        assert!(!LikePattern::new("%a%b", false).matches("xxaxxa"));
    }
}
