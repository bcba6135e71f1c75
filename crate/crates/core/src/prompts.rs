//! Versioned prompt templates.
//!
//! Templates live as plain-text assets under `prompts/` and use `<<name>>`
//! placeholders, substituted in a single pass so that values containing
//! marker-like text are never re-expanded.

pub const DECONTEXTUALIZE: &str = include_str!("../prompts/decontextualize.v1.txt");
pub const ENTITIES: &str = include_str!("../prompts/entities.v1.txt");
pub const RELATIONS: &str = include_str!("../prompts/relations.v1.txt");
pub const SINGLE_STEP: &str = include_str!("../prompts/single_step.v1.txt");
pub const PROXY_TRIPLET: &str = include_str!("../prompts/proxy_triplet.v1.txt");
pub const DECOMPOSE: &str = include_str!("../prompts/decompose.v1.txt");
pub const TRIPLET_CHAIN: &str = include_str!("../prompts/triplet_chain.v1.txt");
pub const TRIPLET_ANSWER: &str = include_str!("../prompts/triplet_answer.v1.txt");
pub const CHUNK_ANSWER_SYSTEM: &str = include_str!("../prompts/chunk_answer_system.v1.txt");
pub const CHUNK_ANSWER: &str = include_str!("../prompts/chunk_answer.v1.txt");
pub const RERANK: &str = include_str!("../prompts/rerank.v1.txt");

/// Template set version, recorded in build fingerprints.
pub const VERSION: u32 = 1;

/// Substitutes `<<name>>` markers. Unknown markers are left untouched.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find("<<") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find(">>") {
            Some(close) => {
                let name = &after[..close];
                match values.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[open..open + 4 + close]),
                }
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn decontextualize(previous: &str, paragraph: &str) -> String {
    render(DECONTEXTUALIZE, &[("previous", previous), ("paragraph", paragraph)])
}

pub fn entities(paragraph: &str) -> String {
    render(ENTITIES, &[("paragraph", paragraph)])
}

pub fn relations(paragraph: &str, entity_names: &[&str]) -> String {
    render(RELATIONS, &[("paragraph", paragraph), ("entities", &entity_names.join(", "))])
}

pub fn single_step(document: &str) -> String {
    render(SINGLE_STEP, &[("document", document)])
}

pub fn proxy_triplet(question: &str, answer: &str) -> String {
    render(PROXY_TRIPLET, &[("question", question), ("answer", answer)])
}

pub fn decompose(question: &str, facts: &[String], answer: &str) -> String {
    render(DECOMPOSE, &[("question", question), ("facts", &facts.join("\n")), ("answer", answer)])
}

pub fn triplet_chain(question: &str) -> String {
    render(TRIPLET_CHAIN, &[("question", question)])
}

pub fn triplet_answer(question: &str, chain: &str, triplets: &str, facts: &str) -> String {
    render(TRIPLET_ANSWER, &[("question", question), ("chain", chain), ("triplets", triplets), ("facts", facts)])
}

pub fn chunk_answer(question: &str, context: &str) -> String {
    render(CHUNK_ANSWER, &[("question", question), ("context", context)])
}

pub fn rerank(question: &str, numbered_facts: &str) -> String {
    render(RERANK, &[("question", question), ("facts", numbered_facts)])
}
