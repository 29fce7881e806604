#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Word,
    /// Digits, optionally with a decimal part (`7`, `7.23`).
    Number,
    Punct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

impl Token<'_> {
    pub fn is_decimal(&self) -> bool {
        self.kind == TokenKind::Number && self.text.contains('.')
    }
}

/// Splits text into words, numbers and single punctuation characters.
/// Offsets are byte positions into the input.
pub fn lex(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut iter = text.char_indices().peekable();
    while let Some((start, c)) = iter.next() {
        if c.is_whitespace() {
            continue;
        }
        let kind = if c.is_alphabetic() {
            while iter.next_if(|(_, c)| c.is_alphabetic()).is_some() {}
            TokenKind::Word
        } else if c.is_ascii_digit() {
            while iter.next_if(|(_, c)| c.is_ascii_digit()).is_some() {}
            // A decimal point followed by a digit stays inside the number.
            let mut ahead = iter.clone();
            if let (Some((_, '.')), Some((_, d))) = (ahead.next(), ahead.next()) {
                if d.is_ascii_digit() {
                    iter.next();
                    while iter.next_if(|(_, c)| c.is_ascii_digit()).is_some() {}
                }
            }
            TokenKind::Number
        } else {
            TokenKind::Punct
        };
        let end = iter.peek().map_or(text.len(), |(i, _)| *i);
        tokens.push(Token {
            kind,
            text: &text[start..end],
            start,
            end,
        });
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_numbers_ranges_and_punctuation() {
        let toks: Vec<_> = lex("SUVmax 7.23, Deauville 4-5.")
            .into_iter()
            .map(|t| (t.kind, t.text))
            .collect();
        assert_eq!(
            toks,
            vec![
                (TokenKind::Word, "SUVmax"),
                (TokenKind::Number, "7.23"),
                (TokenKind::Punct, ","),
                (TokenKind::Word, "Deauville"),
                (TokenKind::Number, "4"),
                (TokenKind::Punct, "-"),
                (TokenKind::Number, "5"),
                (TokenKind::Punct, "."),
            ]
        );
    }

    #[test]
    fn offsets_are_byte_positions() {
        let text = "é Deauville–3";
        for t in lex(text) {
            assert_eq!(&text[t.start..t.end], t.text);
        }
    }
}
