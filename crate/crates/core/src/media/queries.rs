/// Noun phrase of a goal: question framing and the leading verb removed
/// ("How to fold a paper boat?" gives "a paper boat").
pub fn goal_phrase(goal: &str) -> String {
    let g = goal.trim().trim_end_matches(['?', '.', '!']).trim();
    let lower = g.to_lowercase();
    let mut rest = g;
    for prefix in ["how do i ", "how can i ", "how to ", "how do you "] {
        if lower.starts_with(prefix) {
            rest = &g[prefix.len()..];
            break;
        }
    }
    let rest = rest.trim();
    match rest.split_once(char::is_whitespace) {
        Some((_, tail)) if !tail.trim().is_empty() => tail.trim().to_string(),
        _ => rest.to_string(),
    }
}

/// One query for the goal, then one per step (the instruction plus the goal's
/// noun phrase).
pub fn build_queries(goal: &str, steps: &[String]) -> Vec<String> {
    let goal = goal.trim();
    let phrase = goal_phrase(goal);
    std::iter::once(goal.to_string())
        .chain(steps.iter().map(|s| {
            let s = s.trim().trim_end_matches('.');
            if phrase.is_empty() || s.to_lowercase().contains(&phrase.to_lowercase()) {
                s.to_string()
            } else {
                format!("{s} {phrase}")
            }
        }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goal_plus_one_per_step() {
        let steps: Vec<String> =
            ["Fold the paper in half", "Fold the corners down", "Open the bottom", "Pull the sides"]
                .map(String::from)
                .to_vec();
        let q = build_queries("Fold a paper boat", &steps);
        assert_eq!(q.len(), 5);
        assert_eq!(q[0], "Fold a paper boat");
        assert_eq!(q[1], "Fold the paper in half a paper boat");
        assert_eq!(q, build_queries("Fold a paper boat", &steps));
        assert_eq!(build_queries("Fold a paper boat", &[]), vec!["Fold a paper boat"]);
    }

    #[test]
    fn phrases() {
        assert_eq!(goal_phrase("How to fold a paper boat?"), "a paper boat");
        assert_eq!(goal_phrase("Make a latte"), "a latte");
        assert_eq!(goal_phrase("Paint"), "Paint");
    }
}
