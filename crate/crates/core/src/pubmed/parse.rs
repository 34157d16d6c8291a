//! esearch JSON and efetch XML parsing.

use chrono::Datelike;
use roxmltree::{Document, Node, ParsingOptions};
use serde_json::Value;

use super::{article_url, Article, PubmedError};

/// Extracts the id list from an esearch JSON reply, in order.
pub fn parse_esearch(body: &str) -> Result<Vec<String>, PubmedError> {
    let v: Value = serde_json::from_str(body).map_err(|e| PubmedError::Parse(format!("esearch reply: {e}")))?;
    let result = v
        .get("esearchresult")
        .ok_or_else(|| PubmedError::Parse("esearch reply lacks esearchresult".into()))?;
    if let Some(err) = result.get("ERROR").and_then(Value::as_str) {
        return Err(PubmedError::Parse(format!("esearch error: {err}")));
    }
    let Some(list) = result.get("idlist") else {
        return Err(PubmedError::Parse("esearch reply lacks idlist".into()));
    };
    let list = list
        .as_array()
        .ok_or_else(|| PubmedError::Parse("idlist is not an array".into()))?;
    list.iter()
        .map(|id| match id.as_str() {
            Some(s) if is_pmid(s) => Ok(s.to_string()),
            _ => Err(PubmedError::Parse(format!("bad pmid in idlist: {id}"))),
        })
        .collect()
}

pub(crate) fn is_pmid(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn path<'a, 'i>(node: Node<'a, 'i>, names: &[&str]) -> Option<Node<'a, 'i>> {
    names.iter().try_fold(node, |n, name| child(n, name))
}

/// Concatenated descendant text, whitespace-collapsed. Keeps inline markup
/// such as `<i>` out of the way.
fn text_of(node: Node) -> String {
    let raw: String = node
        .descendants()
        .filter(|d| d.is_text())
        .filter_map(|d| d.text())
        .collect();
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn child_text(node: Node, name: &str) -> Option<String> {
    child(node, name).map(text_of).filter(|s| !s.is_empty())
}

fn author_name(author: Node) -> Option<String> {
    if let Some(collective) = child_text(author, "CollectiveName") {
        return Some(collective);
    }
    let last = child_text(author, "LastName")?;
    match child_text(author, "ForeName").or_else(|| child_text(author, "Initials")) {
        Some(first) => Some(format!("{first} {last}")),
        None => Some(last),
    }
}

fn leading_year(s: &str) -> Option<i32> {
    let digits: String = s.trim().chars().take(4).collect();
    (digits.len() == 4 && digits.bytes().all(|b| b.is_ascii_digit()))
        .then(|| digits.parse().ok())
        .flatten()
}

fn publication_year(article: Node) -> Option<i32> {
    let pub_date = path(article, &["Journal", "JournalIssue", "PubDate"]);
    pub_date
        .and_then(|d| child_text(d, "Year").or_else(|| child_text(d, "MedlineDate")))
        .and_then(|s| leading_year(&s))
        .or_else(|| {
            article
                .children()
                .filter(|c| c.has_tag_name("ArticleDate"))
                .find_map(|d| child_text(d, "Year"))
                .and_then(|s| leading_year(&s))
        })
}

fn collect_abstract(article: Node) -> String {
    let Some(abs) = child(article, "Abstract") else {
        return String::new();
    };
    abs.children()
        .filter(|c| c.has_tag_name("AbstractText"))
        .map(|part| {
            let body = text_of(part);
            match part.attribute("Label") {
                Some(label) if !body.is_empty() => format!("{label}: {body}"),
                _ => body,
            }
        })
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

fn parse_one(node: Node, max_year: i32) -> Result<Option<Article>, PubmedError> {
    let citation = child(node, "MedlineCitation")
        .ok_or_else(|| PubmedError::Parse("PubmedArticle without MedlineCitation".into()))?;
    let pmid = child_text(citation, "PMID").unwrap_or_default();
    if !is_pmid(&pmid) {
        return Err(PubmedError::Parse(format!("bad or missing PMID {pmid:?}")));
    }
    let article =
        child(citation, "Article").ok_or_else(|| PubmedError::Parse(format!("{pmid}: missing Article element")))?;
    let Some(year) = publication_year(article).filter(|y| (1800..=max_year).contains(y)) else {
        tracing::warn!(%pmid, "dropping article without a plausible publication year");
        return Ok(None);
    };
    let title = child_text(article, "ArticleTitle")
        .or_else(|| child_text(article, "VernacularTitle"))
        .unwrap_or_default();
    let authors = child(article, "AuthorList")
        .map(|list| {
            list.children()
                .filter(|c| c.has_tag_name("Author"))
                .filter_map(author_name)
                .collect()
        })
        .unwrap_or_default();
    let journal = path(article, &["Journal", "Title"])
        .map(text_of)
        .or_else(|| path(article, &["Journal", "ISOAbbreviation"]).map(text_of))
        .unwrap_or_default();
    let is_review = child(article, "PublicationTypeList").is_some_and(|list| {
        list.children()
            .filter(|c| c.has_tag_name("PublicationType"))
            .any(|t| text_of(t).to_lowercase().contains("review"))
    });
    let abstract_text = collect_abstract(article);
    if abstract_text.is_empty() {
        tracing::warn!(%pmid, "article has no abstract");
    }
    Ok(Some(Article {
        url: article_url(&pmid),
        pmid,
        title,
        authors,
        journal,
        year,
        abstract_text,
        is_review,
    }))
}

/// Parses an efetch `PubmedArticleSet`. Book records are skipped; articles
/// without a plausible year are dropped with a warning.
pub fn parse_efetch(body: &str) -> Result<Vec<Article>, PubmedError> {
    let opts = ParsingOptions {
        allow_dtd: true,
        ..ParsingOptions::default()
    };
    let doc = Document::parse_with_options(body, opts).map_err(|e| PubmedError::Parse(format!("efetch XML: {e}")))?;
    let root = doc.root_element();
    if !root.has_tag_name("PubmedArticleSet") {
        return Err(PubmedError::Parse(format!(
            "unexpected root element <{}>",
            root.tag_name().name()
        )));
    }
    let max_year = chrono::Utc::now().year() + 1;
    let mut out = Vec::new();
    for node in root.children().filter(|c| c.has_tag_name("PubmedArticle")) {
        if let Some(a) = parse_one(node, max_year)? {
            out.push(a);
        }
    }
    Ok(out)
}
