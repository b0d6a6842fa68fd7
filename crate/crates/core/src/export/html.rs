//! Static HTML catalog: paginated index pages and one page per scene.
//! Inline styles only; no scripts and no external resources.

use super::text::{element_names, to_text, Templates};
use super::{scene_file_name, NodeKind, SceneGraphDocument};

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

fn page(title: &str, body: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n</head>\n\
         <body style=\"font-family: sans-serif; margin: 2em; color: #222;\">\n{body}</body>\n</html>\n",
        escape(title)
    )
}

fn band_color(class: &str) -> &'static str {
    match class {
        "lane" => "#d9d9d9",
        "hard_shoulder" => "#bfbfbf",
        "embankment" => "#b7d7a8",
        "median_barrier" | "guard_rail" => "#999999",
        _ => "#e6e6e6",
    }
}

/// Lane-band schematic: one row per element (left to right becomes top to
/// bottom), driving direction to the right, front position in the last column.
pub fn schematic(doc: &SceneGraphDocument, t: &Templates) -> String {
    let names = element_names(doc, t);
    let elements = doc.elements();
    let columns = doc
        .nodes_of(NodeKind::Position)
        .filter_map(|p| doc.position_cell(&p.id))
        .map(|(_, i)| i + 1)
        .max()
        .unwrap_or(0);
    let participants = doc.participants();
    let mut out = String::from(
        "<table style=\"border-collapse: collapse; margin: 1em 0;\">\n\
         <caption style=\"text-align: left;\">driving direction &rarr;</caption>\n",
    );
    for (k, e) in elements.iter().enumerate() {
        let color = band_color(&e.class);
        out.push_str(&format!("<tr><th style=\"text-align: left; padding: 4px 8px;\">{}</th>", escape(&names[k])));
        let offers = doc.targets(&e.id, "offers_position").next().is_some();
        if !offers {
            out.push_str(&format!(
                "<td colspan=\"{}\" style=\"background: {color}; height: 12px;\"></td></tr>\n",
                columns.max(1)
            ));
            continue;
        }
        for col in 0..columns {
            let index = columns - 1 - col;
            let cell = participants.iter().find(|p| p.1 == k && p.2 == index);
            match cell {
                Some((node, _, _, maneuver)) => out.push_str(&format!(
                    "<td style=\"background: {color}; border: 1px dashed #fff; padding: 4px; width: 110px; text-align: center;\">\
                     <span style=\"display: inline-block; background: #c0392b; color: #fff; padding: 2px 6px;\">{}</span>\
                     <br><small>{}</small></td>",
                    escape(&t.name(&node.class)),
                    escape(maneuver)
                )),
                None => out.push_str(&format!(
                    "<td style=\"background: {color}; border: 1px dashed #fff; padding: 4px; width: 110px; text-align: center;\">\
                     <small style=\"color: #2e7d32;\">{}.{}</small></td>",
                    k, index
                )),
            }
        }
        out.push_str("</tr>\n");
    }
    out.push_str("</table>\n");
    out
}

pub fn scene_page(doc: &SceneGraphDocument, t: &Templates, index_file: &str) -> String {
    let mut body = format!(
        "<p><a href=\"{}\">&larr; catalog</a></p>\n<h1 style=\"font-size: 1.2em; word-break: break-all;\">{}</h1>\n",
        escape(index_file),
        escape(&doc.signature)
    );
    body.push_str(&schematic(doc, t));
    body.push_str(&format!("<p>{}</p>\n", escape(&to_text(doc, t))));
    if !doc.annotations.is_empty() {
        body.push_str("<h2 style=\"font-size: 1em;\">Annotations</h2>\n<ul>\n");
        for a in &doc.annotations {
            let bindings: Vec<String> = a.bindings.iter().map(|(k, v)| format!("?{k}={v}")).collect();
            body.push_str(&format!(
                "<li>{} ({}): {}</li>\n",
                escape(&a.rule),
                escape(&a.verdict),
                escape(&bindings.join(", "))
            ));
        }
        body.push_str("</ul>\n");
    }
    page(&doc.signature, &body)
}

/// File name of index page `n` (0-based).
pub fn index_file_name(n: usize) -> String {
    if n == 0 {
        "index.html".to_owned()
    } else {
        format!("index-{}.html", n + 1)
    }
}

/// Index pages listing `entries` as (signature, one-line text); `stats` are
/// shown on every page as (label, value) rows.
pub fn index_pages(
    title: &str,
    entries: &[(String, String)],
    stats: &[(String, String)],
    page_size: usize,
) -> Vec<(String, String)> {
    let page_size = page_size.max(1);
    let pages = entries.len().div_ceil(page_size).max(1);
    let mut out = Vec::with_capacity(pages);
    for n in 0..pages {
        let mut body = format!("<h1 style=\"font-size: 1.4em;\">{}</h1>\n", escape(title));
        body.push_str("<table style=\"border-collapse: collapse; margin-bottom: 1em;\">\n");
        for (k, v) in stats {
            body.push_str(&format!(
                "<tr><th style=\"text-align: left; padding: 2px 8px;\">{}</th><td style=\"padding: 2px 8px;\">{}</td></tr>\n",
                escape(k),
                escape(v)
            ));
        }
        body.push_str("</table>\n");
        body.push_str(&format!("<p>Page {} of {pages}</p>\n<ol start=\"{}\">\n", n + 1, n * page_size + 1));
        for (sig, text) in entries.iter().skip(n * page_size).take(page_size) {
            body.push_str(&format!(
                "<li style=\"margin-bottom: 0.5em;\"><a href=\"{}\" style=\"word-break: break-all;\">{}</a><br><small>{}</small></li>\n",
                escape(&scene_file_name(sig, "html")),
                escape(sig),
                escape(text)
            ));
        }
        body.push_str("</ol>\n<p>");
        if n > 0 {
            body.push_str(&format!("<a href=\"{}\">&larr; previous</a> ", index_file_name(n - 1)));
        }
        if n + 1 < pages {
            body.push_str(&format!("<a href=\"{}\">next &rarr;</a>", index_file_name(n + 1)));
        }
        body.push_str("</p>\n");
        out.push((index_file_name(n), page(title, &body)));
    }
    out
}
