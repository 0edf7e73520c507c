use super::PlannerError;
use crate::pddl::{Plan, Step};

/// Parses one step per line. Accepts `(op a b)`, `op (a, b)` and `op a b`,
/// optional `1.` numbering, and `;` comments.
pub fn parse_plan(text: &str) -> Result<Plan, PlannerError> {
    let mut steps = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split(';').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let line = strip_numbering(line);
        let cleaned: String = line
            .chars()
            .map(|c| if matches!(c, '(' | ')' | ',') { ' ' } else { c })
            .collect();
        let mut words = cleaned.split_whitespace().map(str::to_lowercase);
        let operator = words.next().ok_or_else(|| PlannerError::PlanSyntax {
            line: lineno + 1,
            text: raw.to_string(),
        })?;
        steps.push(Step {
            operator,
            args: words.collect(),
        });
    }
    Ok(Plan::new(steps))
}

fn strip_numbering(line: &str) -> &str {
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits == 0 {
        return line;
    }
    match line[digits..].chars().next() {
        Some('.' | ':' | ')') => line[digits + 1..].trim_start(),
        _ => line,
    }
}
