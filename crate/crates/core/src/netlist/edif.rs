//! Reader and writer for the flat EDIF subset used across the pipeline.
//!
//! Supported forms: `edif / library / cell / view / interface / port /
//! direction / contents / instance / viewRef / cellRef / property INIT /
//! net / joined / portRef / instanceRef`. Anything else is skipped with a
//! warning. Keywords are matched case-insensitively.

use std::fmt::Write as _;

use log::warn;

use super::{Direction, Driver, Endpoint, Netlist, NetlistBuilder, NetlistError, PrimitiveKind, Sink};

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom { text: String, line: usize },
    Str { text: String, line: usize },
    List { items: Vec<Sexp>, line: usize },
}

impl Sexp {
    fn line(&self) -> usize {
        match self {
            Sexp::Atom { line, .. } | Sexp::Str { line, .. } | Sexp::List { line, .. } => *line,
        }
    }

    fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom { text, .. } => Some(text),
            _ => None,
        }
    }

    /// `(keyword ...)` lists: returns the keyword and the remaining items.
    fn form(&self) -> Option<(&str, &[Sexp])> {
        match self {
            Sexp::List { items, .. } => {
                let (head, rest) = items.split_first()?;
                Some((head.atom()?, rest))
            }
            _ => None,
        }
    }

    fn is_form(&self, keyword: &str) -> bool {
        self.form().is_some_and(|(k, _)| k.eq_ignore_ascii_case(keyword))
    }
}

fn syntax(line: usize, msg: impl Into<String>) -> NetlistError {
    NetlistError::Syntax {
        line,
        msg: msg.into(),
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '/'
}

fn read_sexp(text: &str) -> Result<Sexp, NetlistError> {
    let mut stack: Vec<(usize, Vec<Sexp>)> = Vec::new();
    let mut done: Option<Sexp> = None;
    let mut line = 1;
    let mut chars = text.char_indices().peekable();

    while let Some((start, c)) = chars.next() {
        let token = match c {
            '\n' => {
                line += 1;
                continue;
            }
            c if c.is_whitespace() => continue,
            '(' => {
                if done.is_some() {
                    return Err(NetlistError::Lex {
                        line,
                        msg: "content after the closing parenthesis of the document".into(),
                    });
                }
                stack.push((line, Vec::new()));
                continue;
            }
            ')' => {
                let (open_line, items) = stack.pop().ok_or_else(|| NetlistError::Lex {
                    line,
                    msg: "unbalanced `)`".into(),
                })?;
                Sexp::List {
                    items,
                    line: open_line,
                }
            }
            '"' => {
                let tok_line = line;
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some((_, '"')) => break,
                        Some((_, ch)) => {
                            if ch == '\n' {
                                line += 1;
                            }
                            s.push(ch);
                        }
                        None => {
                            return Err(NetlistError::Lex {
                                line: tok_line,
                                msg: "unterminated string".into(),
                            })
                        }
                    }
                }
                Sexp::Str {
                    text: s,
                    line: tok_line,
                }
            }
            c if is_ident_start(c) || c.is_ascii_digit() => {
                let mut end = start + c.len_utf8();
                while let Some(&(i, ch)) = chars.peek() {
                    if is_ident_char(ch) {
                        end = i + ch.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                let tok = &text[start..end];
                if c.is_ascii_digit() && !tok.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(NetlistError::Lex {
                        line,
                        msg: format!("bad token `{tok}`"),
                    });
                }
                Sexp::Atom {
                    text: tok.to_string(),
                    line,
                }
            }
            other => {
                return Err(NetlistError::Lex {
                    line,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        };
        match stack.last_mut() {
            Some((_, items)) => items.push(token),
            None => {
                if done.is_some() || !matches!(token, Sexp::List { .. }) {
                    return Err(NetlistError::Lex {
                        line,
                        msg: "expected a single parenthesised document".into(),
                    });
                }
                done = Some(token);
            }
        }
    }
    if let Some((open_line, _)) = stack.last() {
        return Err(NetlistError::Lex {
            line: *open_line,
            msg: format!("unbalanced `(` opened here; input ends at line {line}"),
        });
    }
    done.ok_or(NetlistError::Lex {
        line,
        msg: "empty document".into(),
    })
}

fn name_of<'a>(items: &'a [Sexp], what: &str, line: usize) -> Result<&'a str, NetlistError> {
    items
        .first()
        .and_then(Sexp::atom)
        .ok_or_else(|| syntax(line, format!("{what} without a name")))
}

/// Parses a document of the supported EDIF subset into a validated netlist.
pub fn parse_edif(text: &str) -> Result<Netlist, NetlistError> {
    let doc = read_sexp(text)?;
    let (kw, items) = doc
        .form()
        .filter(|(k, _)| k.eq_ignore_ascii_case("edif"))
        .ok_or_else(|| syntax(doc.line(), "document must start with `(edif`"))?;
    debug_assert!(kw.eq_ignore_ascii_case("edif"));
    let design_name = name_of(items, "edif", doc.line())?;

    // The top cell is the last cell carrying a `contents` view.
    let mut top: Option<(&str, &Sexp)> = None;
    for item in &items[1..] {
        match item.form() {
            Some((k, lib_items)) if k.eq_ignore_ascii_case("library") => {
                for cell in lib_items.iter().skip(1) {
                    if !cell.is_form("cell") {
                        if let Some((k, _)) = cell.form() {
                            if !k.eq_ignore_ascii_case("edifLevel") && !k.eq_ignore_ascii_case("technology") {
                                warn!("line {}: ignoring `{k}` in library", cell.line());
                            }
                        }
                        continue;
                    }
                    let (_, cell_items) = cell.form().unwrap();
                    let cell_name = name_of(cell_items, "cell", cell.line())?;
                    for view in cell_items.iter().skip(1) {
                        if view.is_form("view")
                            && view.form().unwrap().1.iter().any(|v| v.is_form("contents"))
                        {
                            top = Some((cell_name, view));
                        }
                    }
                }
            }
            Some((k, _)) => {
                if !["edifVersion", "edifLevel", "keywordMap", "status", "design", "external"]
                    .iter()
                    .any(|s| s.eq_ignore_ascii_case(k))
                {
                    warn!("line {}: ignoring `{k}`", item.line());
                }
            }
            None => return Err(syntax(item.line(), "unexpected atom in edif")),
        }
    }
    let (_, view) = top.ok_or_else(|| syntax(doc.line(), "no cell with a `contents` view"))?;
    let (_, view_items) = view.form().unwrap();

    let mut builder = NetlistBuilder::new(design_name);
    for section in view_items.iter().skip(1) {
        match section.form() {
            Some((k, ports)) if k.eq_ignore_ascii_case("interface") => {
                for port in ports {
                    parse_port(port, &mut builder)?;
                }
            }
            _ => {}
        }
    }
    for section in view_items.iter().skip(1) {
        match section.form() {
            Some((k, entries)) if k.eq_ignore_ascii_case("contents") => {
                for e in entries {
                    match e.form() {
                        Some((k, _)) if k.eq_ignore_ascii_case("instance") => {
                            parse_instance(e, &mut builder)?
                        }
                        Some((k, _)) if k.eq_ignore_ascii_case("net") => {}
                        Some((k, _)) => warn!("line {}: ignoring `{k}` in contents", e.line()),
                        None => return Err(syntax(e.line(), "unexpected atom in contents")),
                    }
                }
                for e in entries.iter().filter(|e| e.is_form("net")) {
                    parse_net(e, &mut builder)?;
                }
            }
            Some((k, _)) if k.eq_ignore_ascii_case("interface") || k.eq_ignore_ascii_case("viewType") => {}
            Some((k, _)) => warn!("line {}: ignoring `{k}` in view", section.line()),
            None => {}
        }
    }
    builder.finish()
}

fn parse_port(port: &Sexp, builder: &mut NetlistBuilder) -> Result<(), NetlistError> {
    let Some((k, items)) = port.form() else {
        return Err(syntax(port.line(), "expected `(port ...)`"));
    };
    if !k.eq_ignore_ascii_case("port") {
        warn!("line {}: ignoring `{k}` in interface", port.line());
        return Ok(());
    }
    let name = name_of(items, "port", port.line())?;
    let dir = items
        .iter()
        .skip(1)
        .find_map(|i| match i.form() {
            Some((k, d)) if k.eq_ignore_ascii_case("direction") => d.first().and_then(Sexp::atom),
            _ => None,
        })
        .ok_or_else(|| syntax(port.line(), format!("port `{name}` has no direction")))?;
    let direction = if dir.eq_ignore_ascii_case("INPUT") {
        Direction::Input
    } else if dir.eq_ignore_ascii_case("OUTPUT") {
        Direction::Output
    } else {
        return Err(syntax(port.line(), format!("unsupported direction `{dir}`")));
    };
    builder.port(name, direction)?;
    Ok(())
}

fn parse_instance(inst: &Sexp, builder: &mut NetlistBuilder) -> Result<(), NetlistError> {
    let (_, items) = inst.form().unwrap();
    let name = name_of(items, "instance", inst.line())?;
    let mut kind = None;
    let mut init = None;
    for item in &items[1..] {
        match item.form() {
            Some((k, view_ref)) if k.eq_ignore_ascii_case("viewRef") => {
                let cell_ref = view_ref
                    .iter()
                    .find(|s| s.is_form("cellRef"))
                    .ok_or_else(|| syntax(item.line(), "viewRef without cellRef"))?;
                let (_, cr) = cell_ref.form().unwrap();
                let k = name_of(cr, "cellRef", cell_ref.line())?;
                kind = Some(k.parse::<PrimitiveKind>()?);
            }
            Some((k, prop)) if k.eq_ignore_ascii_case("property") => {
                let pname = name_of(prop, "property", item.line())?;
                if !pname.eq_ignore_ascii_case("INIT") {
                    warn!("line {}: ignoring property `{pname}` on `{name}`", item.line());
                    continue;
                }
                let value = prop
                    .iter()
                    .skip(1)
                    .find_map(|v| match v.form() {
                        Some((k, s)) if k.eq_ignore_ascii_case("string") => match s.first() {
                            Some(Sexp::Str { text, .. }) => Some(text.as_str()),
                            _ => None,
                        },
                        _ => None,
                    })
                    .ok_or_else(|| syntax(item.line(), "INIT must be `(string \"<hex>\")`"))?;
                let digits = value.trim_start_matches("0x").trim_start_matches("0X");
                init = Some(u64::from_str_radix(digits, 16).map_err(|_| NetlistError::BadInit {
                    cell: name.to_string(),
                    msg: format!("INIT `{value}` is not hexadecimal"),
                })?);
            }
            Some((k, _)) => warn!("line {}: ignoring `{k}` on instance `{name}`", item.line()),
            None => return Err(syntax(item.line(), "unexpected atom in instance")),
        }
    }
    let kind = kind.ok_or_else(|| syntax(inst.line(), format!("instance `{name}` has no cellRef")))?;
    if init.is_some() && kind.lut_inputs().is_none() {
        warn!("line {}: ignoring INIT on non-LUT instance `{name}`", inst.line());
        init = None;
    }
    builder.cell(name, kind, init)?;
    Ok(())
}

fn parse_net(net: &Sexp, builder: &mut NetlistBuilder) -> Result<(), NetlistError> {
    let (_, items) = net.form().unwrap();
    let name = name_of(items, "net", net.line())?;
    let mut endpoints = Vec::new();
    for item in &items[1..] {
        let Some((k, refs)) = item.form() else {
            return Err(syntax(item.line(), "unexpected atom in net"));
        };
        if !k.eq_ignore_ascii_case("joined") {
            warn!("line {}: ignoring `{k}` in net `{name}`", item.line());
            continue;
        }
        for r in refs {
            let Some((k, pr)) = r.form() else {
                return Err(syntax(r.line(), "expected `(portRef ...)`"));
            };
            if !k.eq_ignore_ascii_case("portRef") {
                return Err(syntax(r.line(), format!("unsupported `{k}` in joined")));
            }
            let pin = name_of(pr, "portRef", r.line())?;
            let inst = pr.iter().skip(1).find_map(|s| match s.form() {
                Some((k, i)) if k.eq_ignore_ascii_case("instanceRef") => i.first().and_then(Sexp::atom),
                _ => None,
            });
            endpoints.push(match inst {
                Some(i) => Endpoint::Pin(i.to_string(), pin.to_string()),
                None => Endpoint::Port(pin.to_string()),
            });
        }
    }
    builder.net(name, endpoints);
    Ok(())
}

/// Writes the netlist in the same EDIF subset [`parse_edif`] reads.
///
/// Output is a pure function of the netlist: cells, ports and nets appear in
/// netlist order and each net lists its driver first.
pub fn emit_edif(netlist: &Netlist) -> String {
    let mut out = String::new();
    let name = netlist.name();
    let _ = writeln!(out, "(edif {name}");
    let _ = writeln!(out, "  (library work");
    let _ = writeln!(out, "    (cell {name}");
    let _ = writeln!(out, "      (view netlist");
    let _ = writeln!(out, "        (interface");
    for p in netlist.ports() {
        let dir = match p.direction {
            Direction::Input => "INPUT",
            Direction::Output => "OUTPUT",
        };
        let _ = writeln!(out, "          (port {} (direction {dir}))", p.name);
    }
    let _ = writeln!(out, "        )");
    let _ = writeln!(out, "        (contents");
    for c in netlist.cells() {
        let _ = write!(out, "          (instance {} (viewRef netlist (cellRef {}))", c.id, c.kind);
        if let (Some(init), Some(k)) = (c.init, c.kind.lut_inputs()) {
            let digits = ((1usize << k) / 4).max(1);
            let _ = write!(out, " (property INIT (string \"{init:0digits$X}\"))");
        }
        out.push_str(")\n");
    }
    for net in netlist.nets() {
        let _ = write!(out, "          (net {} (joined", net.name);
        match net.driver {
            Driver::Cell(c) => {
                let cell = netlist.cell(c);
                let _ = write!(out, " (portRef {} (instanceRef {}))", cell.kind.output_pin(), cell.id);
            }
            Driver::Port(p) => {
                let _ = write!(out, " (portRef {})", netlist.port(p).name);
            }
        }
        for s in &net.sinks {
            match *s {
                Sink::Cell(c, pin) => {
                    let cell = netlist.cell(c);
                    let _ = write!(
                        out,
                        " (portRef {} (instanceRef {}))",
                        cell.kind.input_pins()[pin],
                        cell.id
                    );
                }
                Sink::Port(p) => {
                    let _ = write!(out, " (portRef {})", netlist.port(p).name);
                }
            }
        }
        out.push_str("))\n");
    }
    let _ = writeln!(out, "        )");
    out.push_str("      )\n    )\n  )\n)\n");
    out
}
