use serde::{Deserialize, Serialize};

/// How raw text is cut into tokens.
///
/// `Char` emits every non-whitespace character (CJK text). `Latin` splits on
/// whitespace and peels punctuation into single-character tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizationMode {
    #[default]
    Char,
    Latin,
}

impl TokenizationMode {
    pub fn tokenize(self, text: &str) -> Vec<String> {
        match self {
            TokenizationMode::Char => text
                .chars()
                .filter(|c| !c.is_whitespace())
                .map(String::from)
                .collect(),
            TokenizationMode::Latin => {
                let mut out = Vec::new();
                for word in text.split_whitespace() {
                    let mut cur = String::new();
                    for c in word.chars() {
                        if is_punct(c) {
                            if !cur.is_empty() {
                                out.push(std::mem::take(&mut cur));
                            }
                            out.push(c.to_string());
                        } else {
                            cur.push(c);
                        }
                    }
                    if !cur.is_empty() {
                        out.push(cur);
                    }
                }
                out
            }
        }
    }

    pub fn detokenize<S: AsRef<str>>(self, tokens: &[S]) -> String {
        let sep = match self {
            TokenizationMode::Char => "",
            TokenizationMode::Latin => " ",
        };
        tokens
            .iter()
            .map(AsRef::as_ref)
            .collect::<Vec<_>>()
            .join(sep)
    }
}

impl std::str::FromStr for TokenizationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "char" => Ok(TokenizationMode::Char),
            "latin" => Ok(TokenizationMode::Latin),
            other => Err(format!(
                "unknown tokenization mode {other:?} (expected char or latin)"
            )),
        }
    }
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace() && !c.is_ascii())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_mode() {
        assert_eq!(
            TokenizationMode::Char.tokenize("天窗 高"),
            ["天", "窗", "高"]
        );
        assert_eq!(TokenizationMode::Char.detokenize(&["天", "窗"]), "天窗");
    }

    #[test]
    fn latin_mode() {
        assert_eq!(
            TokenizationMode::Latin.tokenize("The beam, spans 5m."),
            ["The", "beam", ",", "spans", "5m", "."]
        );
        assert_eq!(
            TokenizationMode::Latin.tokenize("E:beam:obj"),
            ["E", ":", "beam", ":", "obj"]
        );
        assert!(TokenizationMode::Latin.tokenize("   ").is_empty());
    }
}
