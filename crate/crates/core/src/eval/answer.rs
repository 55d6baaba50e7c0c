use super::Label;

/// Earliest standalone `yes`, `no` or `maybe` in the lowercased text.
/// Tokens are maximal alphanumeric runs, so `no` never fires inside
/// `maybe`, `not` or `know`.
pub fn parse_answer(text: &str) -> Option<Label> {
    text.to_lowercase().split(|c: char| !c.is_alphanumeric()).find_map(|tok| match tok {
        "yes" => Some(Label::Yes),
        "no" => Some(Label::No),
        "maybe" => Some(Label::Maybe),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(parse_answer("Answer: Yes."), Some(Label::Yes));
        assert_eq!(parse_answer("maybe"), Some(Label::Maybe));
        assert_eq!(parse_answer("the study is inconclusive"), None);
    }

    #[test]
    fn earliest_token_wins() {
        assert_eq!(parse_answer("No, although yes in mice"), Some(Label::No));
        assert_eq!(parse_answer("I do not know; maybe, yes"), Some(Label::Maybe));
        assert_eq!(parse_answer("yesterday nobody"), None);
        assert_eq!(parse_answer("MAYBE!"), Some(Label::Maybe));
    }
}
