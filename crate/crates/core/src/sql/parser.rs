use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use crate::error::{Error, Result};

const RESERVED: &[&str] = &[
    "SELECT",
    "FROM",
    "WHERE",
    "JOIN",
    "INNER",
    "LEFT",
    "RIGHT",
    "FULL",
    "OUTER",
    "CROSS",
    "NATURAL",
    "ON",
    "USING",
    "GROUP",
    "ORDER",
    "HAVING",
    "LIMIT",
    "UNION",
    "EXCEPT",
    "INTERSECT",
    "AND",
    "OR",
    "NOT",
    "AS",
    "IS",
    "NULL",
    "LIKE",
    "ILIKE",
    "IN",
    "BETWEEN",
];

/// Parses a select-project-join query.
pub fn parse(sql: &str) -> Result<QuerySpec> {
    let tokens = tokenize(sql)?;
    let mut p = Parser { tokens, i: 0 };
    let mut spec = p.query()?;
    extract_join_constraints(&mut spec);
    Ok(spec)
}

struct Parser {
    tokens: Vec<Token>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.i].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.tokens[(self.i + k).min(self.tokens.len() - 1)].tok
    }

    fn pos(&self) -> usize {
        self.tokens[self.i].pos
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.i].tok.clone();
        if self.i + 1 < self.tokens.len() {
            self.i += 1;
        }
        t
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn unsupported<T>(&self, what: impl Into<String>) -> Result<T> {
        Err(Error::Unsupported {
            pos: self.pos(),
            what: what.into(),
        })
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn is_kw_at(&self, k: usize, kw: &str) -> bool {
        matches!(self.peek_at(k), Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.syntax(format!("expected {kw}"))
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.syntax(format!("expected {what}"))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_reserved(&s) => {
                self.bump();
                Ok(s)
            }
            Tok::QuotedIdent(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.syntax("expected identifier"),
        }
    }

    fn query(&mut self) -> Result<QuerySpec> {
        self.expect_kw("SELECT")?;
        if self.is_kw("DISTINCT") {
            return self.unsupported("SELECT DISTINCT");
        }
        let projection = self.projection()?;
        self.expect_kw("FROM")?;
        let (tables, join_constraints) = self.table_list()?;
        let where_expr = if self.eat_kw("WHERE") {
            Some(self.expr()?)
        } else {
            None
        };
        for kw in [
            "GROUP",
            "ORDER",
            "HAVING",
            "LIMIT",
            "UNION",
            "EXCEPT",
            "INTERSECT",
        ] {
            if self.is_kw(kw) {
                return self.unsupported(format!("{kw} clause"));
            }
        }
        while *self.peek() == Tok::Semi {
            self.bump();
        }
        if *self.peek() != Tok::Eof {
            return self.syntax("unexpected trailing input");
        }
        Ok(QuerySpec {
            projection,
            tables,
            join_constraints,
            where_expr,
        })
    }

    fn projection(&mut self) -> Result<Projection> {
        if *self.peek() == Tok::Star {
            self.bump();
            return Ok(Projection::Star);
        }
        let mut cols = vec![self.select_item()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            cols.push(self.select_item()?);
        }
        Ok(Projection::Columns(cols))
    }

    fn select_item(&mut self) -> Result<ColumnName> {
        if matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::LParen {
            return self.unsupported("function call or aggregate in SELECT list");
        }
        let c = self.column_name()?;
        if self.eat_kw("AS") {
            return self.unsupported("column alias");
        }
        Ok(c)
    }

    fn column_name(&mut self) -> Result<ColumnName> {
        let first = self.ident()?;
        if *self.peek() == Tok::Dot {
            self.bump();
            if *self.peek() == Tok::Star {
                return self.unsupported("qualified star projection");
            }
            let column = self.ident()?;
            Ok(ColumnName {
                qualifier: Some(first),
                column,
            })
        } else {
            Ok(ColumnName {
                qualifier: None,
                column: first,
            })
        }
    }

    fn table_ref(&mut self) -> Result<TableRef> {
        if *self.peek() == Tok::LParen {
            return self.unsupported("subquery in FROM");
        }
        let name = self.ident()?;
        let alias = if self.eat_kw("AS") {
            Some(self.ident()?)
        } else {
            match self.peek() {
                Tok::Ident(s) if !is_reserved(s) => Some(self.ident()?),
                Tok::QuotedIdent(_) => Some(self.ident()?),
                _ => None,
            }
        };
        Ok(TableRef { name, alias })
    }

    fn table_list(&mut self) -> Result<(Vec<TableRef>, Vec<JoinConstraint>)> {
        let mut tables = vec![self.table_ref()?];
        let mut constraints = Vec::new();
        loop {
            if *self.peek() == Tok::Comma {
                self.bump();
                tables.push(self.table_ref()?);
            } else if self.is_kw("JOIN") || (self.is_kw("INNER") && self.is_kw_at(1, "JOIN")) {
                self.eat_kw("INNER");
                self.expect_kw("JOIN")?;
                tables.push(self.table_ref()?);
                self.expect_kw("ON")?;
                loop {
                    constraints.push(self.join_condition()?);
                    if !self.eat_kw("AND") {
                        break;
                    }
                }
            } else {
                for kw in ["LEFT", "RIGHT", "FULL", "OUTER", "CROSS", "NATURAL"] {
                    if self.is_kw(kw) {
                        return self.unsupported(format!("{kw} JOIN"));
                    }
                }
                break;
            }
        }
        Ok((tables, constraints))
    }

    fn join_condition(&mut self) -> Result<JoinConstraint> {
        if *self.peek() == Tok::LParen {
            return self.unsupported("complex ON condition");
        }
        let left = self.column_name()?;
        if *self.peek() != Tok::Eq {
            return self.unsupported("non-equality join condition");
        }
        self.bump();
        match self.peek() {
            Tok::Ident(_) | Tok::QuotedIdent(_) => {}
            _ => return self.unsupported("join condition against a literal"),
        }
        let right = self.column_name()?;
        if self.is_kw("OR") {
            return self.unsupported("disjunctive ON condition");
        }
        Ok(JoinConstraint { left, right })
    }

    fn expr(&mut self) -> Result<RawExpr> {
        let mut items = vec![self.and_expr()?];
        while self.eat_kw("OR") {
            items.push(self.and_expr()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            RawExpr::Or(items)
        })
    }

    fn and_expr(&mut self) -> Result<RawExpr> {
        let mut items = vec![self.not_expr()?];
        while self.eat_kw("AND") {
            items.push(self.not_expr()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            RawExpr::And(items)
        })
    }

    fn not_expr(&mut self) -> Result<RawExpr> {
        if self.is_kw("NOT") && !self.is_kw_at(1, "EXISTS") {
            self.bump();
            return Ok(RawExpr::Not(Box::new(self.not_expr()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<RawExpr> {
        if self.is_kw("EXISTS") || (self.is_kw("NOT") && self.is_kw_at(1, "EXISTS")) {
            return self.unsupported("EXISTS subquery");
        }
        if *self.peek() == Tok::LParen {
            if self.is_kw_at(1, "SELECT") {
                return self.unsupported("subquery");
            }
            self.bump();
            let e = self.expr()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(e);
        }
        self.predicate()
    }

    fn operand(&mut self) -> Result<Operand> {
        match self.peek().clone() {
            Tok::Number(_) | Tok::Minus => Ok(Operand::Literal(self.number()?)),
            Tok::Str(s) => {
                self.bump();
                Ok(Operand::Literal(Literal::Str(s)))
            }
            Tok::Ident(s) if s.eq_ignore_ascii_case("NULL") => {
                self.bump();
                Ok(Operand::Literal(Literal::Null))
            }
            Tok::Ident(s) if s.eq_ignore_ascii_case("TRUE") => {
                self.bump();
                Ok(Operand::Literal(Literal::Bool(true)))
            }
            Tok::Ident(s) if s.eq_ignore_ascii_case("FALSE") => {
                self.bump();
                Ok(Operand::Literal(Literal::Bool(false)))
            }
            Tok::Ident(_) if *self.peek_at(1) == Tok::LParen => self.unsupported("function call"),
            Tok::Ident(_) | Tok::QuotedIdent(_) => Ok(Operand::Column(self.column_name()?)),
            Tok::LParen if self.is_kw_at(1, "SELECT") => self.unsupported("scalar subquery"),
            _ => self.syntax("expected column or literal"),
        }
    }

    fn number(&mut self) -> Result<Literal> {
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let Tok::Number(text) = self.peek().clone() else {
            return self.syntax("expected number");
        };
        let lit = if text.contains(['.', 'e', 'E']) {
            match text.parse::<f64>() {
                Ok(v) => Literal::Float(if neg { -v } else { v }),
                Err(_) => return self.syntax(format!("invalid number `{text}`")),
            }
        } else {
            let full = if neg {
                format!("-{text}")
            } else {
                text.clone()
            };
            match full.parse::<i64>() {
                Ok(v) => Literal::Int(v),
                Err(_) => return self.syntax(format!("integer `{full}` out of range")),
            }
        };
        self.bump();
        Ok(lit)
    }

    fn predicate(&mut self) -> Result<RawExpr> {
        let left = self.operand()?;
        let op = match self.peek() {
            Tok::Eq => Some(CmpOp::Eq),
            Tok::Ne => Some(CmpOp::Ne),
            Tok::Lt => Some(CmpOp::Lt),
            Tok::Le => Some(CmpOp::Le),
            Tok::Gt => Some(CmpOp::Gt),
            Tok::Ge => Some(CmpOp::Ge),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            if *self.peek() == Tok::LParen {
                return self.unsupported("subquery comparison");
            }
            let right = self.operand()?;
            return Ok(RawExpr::Predicate(RawPredicate::Compare {
                left,
                op,
                right,
            }));
        }
        let column = match left {
            Operand::Column(c) => c,
            Operand::Literal(_) => return self.syntax("expected comparison operator"),
        };
        if self.eat_kw("IS") {
            let negated = self.eat_kw("NOT");
            self.expect_kw("NULL")?;
            return Ok(negate(
                RawExpr::Predicate(RawPredicate::IsNull(column)),
                negated,
            ));
        }
        let negated = self.eat_kw("NOT");
        if self.is_kw("LIKE") || self.is_kw("ILIKE") {
            let case_insensitive = self.is_kw("ILIKE");
            self.bump();
            let Tok::Str(pattern) = self.peek().clone() else {
                return self.syntax("expected string pattern");
            };
            self.bump();
            if self.is_kw("ESCAPE") {
                return self.unsupported("LIKE ... ESCAPE");
            }
            let e = RawExpr::Predicate(RawPredicate::Like {
                column,
                pattern,
                case_insensitive,
            });
            return Ok(negate(e, negated));
        }
        if self.eat_kw("BETWEEN") {
            let lo = self.literal_operand()?;
            self.expect_kw("AND")?;
            let hi = self.literal_operand()?;
            let col = Operand::Column(column);
            let e = RawExpr::And(vec![
                RawExpr::Predicate(RawPredicate::Compare {
                    left: col.clone(),
                    op: CmpOp::Ge,
                    right: lo,
                }),
                RawExpr::Predicate(RawPredicate::Compare {
                    left: col,
                    op: CmpOp::Le,
                    right: hi,
                }),
            ]);
            return Ok(negate(e, negated));
        }
        if self.eat_kw("IN") {
            self.expect(Tok::LParen, "`(`")?;
            if self.is_kw("SELECT") {
                return self.unsupported("IN subquery");
            }
            let mut items = Vec::new();
            loop {
                let v = self.literal_operand()?;
                items.push(RawExpr::Predicate(RawPredicate::Compare {
                    left: Operand::Column(column.clone()),
                    op: CmpOp::Eq,
                    right: v,
                }));
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
            self.expect(Tok::RParen, "`)`")?;
            let e = if items.len() == 1 {
                items.pop().unwrap()
            } else {
                RawExpr::Or(items)
            };
            return Ok(negate(e, negated));
        }
        if negated {
            return self.syntax("expected LIKE, ILIKE, BETWEEN or IN after NOT");
        }
        self.syntax("expected predicate operator")
    }

    fn literal_operand(&mut self) -> Result<Operand> {
        let pos = self.pos();
        match self.operand()? {
            o @ Operand::Literal(_) => Ok(o),
            Operand::Column(_) => Err(Error::Unsupported {
                pos,
                what: "column reference in literal list".into(),
            }),
        }
    }
}

fn negate(e: RawExpr, negated: bool) -> RawExpr {
    if negated {
        RawExpr::Not(Box::new(e))
    } else {
        e
    }
}

fn is_reserved(s: &str) -> bool {
    RESERVED.iter().any(|k| k.eq_ignore_ascii_case(s))
}

fn as_join_constraint(e: &RawExpr) -> Option<JoinConstraint> {
    match e {
        RawExpr::Predicate(RawPredicate::Compare {
            left: Operand::Column(l),
            op: CmpOp::Eq,
            right: Operand::Column(r),
        }) if l.qualifier.is_none() || r.qualifier.is_none() || l.qualifier != r.qualifier => {
            Some(JoinConstraint {
                left: l.clone(),
                right: r.clone(),
            })
        }
        _ => None,
    }
}

/// Moves top-level column equalities out of the WHERE tree.
fn extract_join_constraints(spec: &mut QuerySpec) {
    let Some(w) = spec.where_expr.take() else {
        return;
    };
    let conjuncts = match w {
        RawExpr::And(cs) => cs,
        other => vec![other],
    };
    let mut rest = Vec::new();
    for c in conjuncts {
        match as_join_constraint(&c) {
            Some(jc) => spec.join_constraints.push(jc),
            None => rest.push(c),
        }
    }
    spec.where_expr = match rest.len() {
        0 => None,
        1 => rest.pop(),
        _ => Some(RawExpr::And(rest)),
    };
}
