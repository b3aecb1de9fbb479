//! Read-only SQL validation over the parsed statement tree.
//!
//! Checks run in a fixed order: single statement, SELECT class, no
//! mutating statement anywhere in the tree, table/column resolution against
//! the snapshot, join predicates, and finally `LIMIT` injection.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::ControlFlow;

use sqlparser::ast::{
    Expr, GroupByExpr, Ident, JoinConstraint, JoinOperator, LimitClause, ObjectName, OrderByKind,
    Query, Select, SelectItem, SelectItemQualifiedWildcardKind, SetExpr, Statement, TableFactor,
    TableWithJoins, Visit, Visitor,
};
use sqlparser::dialect::{Dialect as ParserDialect, SQLiteDialect};
use sqlparser::parser::Parser;

use super::{SchemaSnapshot, SqlError, SqlPlan, ValidatedSql};

pub const CARTESIAN_WARNING: &str = "possible cartesian product";

/// Keywords that may never appear as a statement anywhere in the tree.
const DENYLIST: [&str; 14] = [
    "INSERT", "UPDATE", "DELETE", "DROP", "ALTER", "CREATE", "TRUNCATE", "GRANT", "REVOKE", "ATTACH",
    "PRAGMA", "CALL", "MERGE", "REPLACE",
];

/// Identifiers that resolve without a table: engine pseudo-columns and
/// niladic keywords some dialects parse as identifiers.
const BUILTIN_IDENTS: [&str; 6] = ["rowid", "oid", "_rowid_", "current_date", "current_time", "current_timestamp"];

/// Validates against the embedded engine's grammar.
pub fn validate_sql(plan: &SqlPlan, snapshot: &SchemaSnapshot, default_limit: usize) -> Result<ValidatedSql, SqlError> {
    validate_sql_with(plan, snapshot, default_limit, &SQLiteDialect {})
}

pub fn validate_sql_with(
    plan: &SqlPlan,
    snapshot: &SchemaSnapshot,
    default_limit: usize,
    dialect: &dyn ParserDialect,
) -> Result<ValidatedSql, SqlError> {
    let default_limit = default_limit.max(1);
    let statements = Parser::parse_sql(dialect, &plan.raw_sql).map_err(|e| {
        // An unparseable mutation is still reported as what it is.
        match first_word(dialect, &plan.raw_sql) {
            Some(w) if DENYLIST.contains(&w.as_str()) => SqlError::ReadOnlyViolation(w),
            _ => SqlError::ParseError(e.to_string()),
        }
    })?;
    let statement = match statements.as_slice() {
        [] => return Err(SqlError::ParseError("empty statement".into())),
        [one] => one,
        _ => return Err(SqlError::MultipleStatements),
    };

    let query = match statement {
        Statement::Query(q) => q,
        other => {
            let first = first_word(dialect, &plan.raw_sql);
            let kw = match first {
                Some(w) if DENYLIST.contains(&w.as_str()) => w,
                _ => leading_keyword(other),
            };
            return Err(SqlError::ReadOnlyViolation(kw));
        }
    };

    reject_nested_mutations(query)?;

    let mut checker = Resolver { snapshot, warnings: Vec::new() };
    checker.query(query, &BTreeMap::new(), &[])?;

    let mut warnings = checker.warnings;
    warnings.dedup();

    let (sql, injected_limit) = if has_row_limit(query) {
        (plan.raw_sql.clone(), None)
    } else {
        (inject_limit(&plan.raw_sql, query, default_limit), Some(default_limit))
    };
    // The rewritten text must still be a single statement.
    match Parser::parse_sql(dialect, &sql) {
        Ok(s) if s.len() == 1 => {}
        Ok(_) => return Err(SqlError::MultipleStatements),
        Err(e) => return Err(SqlError::ParseError(e.to_string())),
    }
    Ok(ValidatedSql { sql, injected_limit, warnings })
}

/// First keyword of the source text, skipping comments and whitespace.
fn first_word(dialect: &dyn ParserDialect, sql: &str) -> Option<String> {
    let tokens = sqlparser::tokenizer::Tokenizer::new(dialect, sql).tokenize().ok()?;
    tokens.into_iter().find_map(|t| match t {
        sqlparser::tokenizer::Token::Word(w) => Some(w.value.to_ascii_uppercase()),
        _ => None,
    })
}

fn leading_keyword(statement: &Statement) -> String {
    if let Statement::Insert(insert) = statement {
        if insert.replace_into {
            return "REPLACE".into();
        }
    }
    statement
        .to_string()
        .split_whitespace()
        .next()
        .unwrap_or("UNKNOWN")
        .to_ascii_uppercase()
}

fn reject_nested_mutations(query: &Query) -> Result<(), SqlError> {
    let mut found: Option<String> = None;
    let _ = sqlparser::ast::visit_statements(query, |s| {
        let kw = leading_keyword(s);
        found = Some(if DENYLIST.contains(&kw.as_str()) { kw } else { format!("{kw} (nested statement)") });
        ControlFlow::<()>::Break(())
    });
    if let Some(kw) = found {
        return Err(SqlError::ReadOnlyViolation(kw));
    }
    // SELECT ... INTO materializes a table.
    let mut into = false;
    walk_selects(query, &mut |s: &Select| into |= s.into.is_some());
    if into {
        return Err(SqlError::ReadOnlyViolation("INTO".into()));
    }
    Ok(())
}

fn walk_selects(query: &Query, f: &mut dyn FnMut(&Select)) {
    struct SelectWalker<'a> {
        f: &'a mut dyn FnMut(&Select),
    }
    impl Visitor for SelectWalker<'_> {
        type Break = ();
        fn pre_visit_select(&mut self, select: &Select) -> ControlFlow<()> {
            (self.f)(select);
            ControlFlow::Continue(())
        }
    }
    let _ = query.visit(&mut SelectWalker { f });
}

fn has_row_limit(query: &Query) -> bool {
    let limited = match &query.limit_clause {
        Some(LimitClause::LimitOffset { limit, .. }) => limit.is_some(),
        Some(LimitClause::OffsetCommaLimit { .. }) => true,
        None => false,
    };
    let top = matches!(query.body.as_ref(), SetExpr::Select(s) if s.top.is_some());
    limited || query.fetch.is_some() || top
}

fn inject_limit(raw: &str, query: &Query, limit: usize) -> String {
    if let Some(LimitClause::LimitOffset { limit: None, .. }) = &query.limit_clause {
        // OFFSET without LIMIT: the clause order matters, so rewrite the tree.
        let mut q = query.clone();
        if let Some(LimitClause::LimitOffset { limit: l, .. }) = &mut q.limit_clause {
            *l = Some(Expr::value(sqlparser::ast::Value::Number(limit.to_string(), false)));
        }
        return q.to_string();
    }
    let trimmed = raw.trim_end().trim_end_matches(';').trim_end();
    if trimmed.contains("--") {
        format!("{trimmed}\nLIMIT {limit}")
    } else {
        format!("{trimmed} LIMIT {limit}")
    }
}

/// Column set of a relation; `None` when it cannot be known statically
/// (table functions, `SELECT *` over such relations).
type Columns = Option<BTreeSet<String>>;

#[derive(Debug, Clone)]
struct Binding {
    name: String,
    columns: Columns,
}

#[derive(Debug, Clone, Default)]
struct Frame {
    bindings: Vec<Binding>,
    aliases: BTreeSet<String>,
}

struct SetOutput {
    columns: Columns,
    frame: Option<Frame>,
}

fn norm(ident: &Ident) -> String {
    ident.value.to_lowercase()
}

fn last_part(name: &ObjectName) -> String {
    name.0
        .last()
        .and_then(|p| p.as_ident())
        .map(norm)
        .unwrap_or_else(|| name.to_string().to_lowercase())
}

/// Collects identifiers belonging to the current scope; subqueries are
/// gathered separately so they can be resolved in their own scope.
#[derive(Default)]
struct IdentCollector {
    depth: usize,
    idents: Vec<Vec<Ident>>,
    subqueries: Vec<Query>,
}

impl Visitor for IdentCollector {
    type Break = ();

    fn pre_visit_query(&mut self, query: &Query) -> ControlFlow<()> {
        if self.depth == 0 {
            self.subqueries.push(query.clone());
        }
        self.depth += 1;
        ControlFlow::Continue(())
    }

    fn post_visit_query(&mut self, _query: &Query) -> ControlFlow<()> {
        self.depth -= 1;
        ControlFlow::Continue(())
    }

    fn pre_visit_expr(&mut self, expr: &Expr) -> ControlFlow<()> {
        if self.depth == 0 {
            match expr {
                Expr::Identifier(i) => self.idents.push(vec![i.clone()]),
                Expr::CompoundIdentifier(parts) => self.idents.push(parts.clone()),
                _ => {}
            }
        }
        ControlFlow::Continue(())
    }
}

struct Resolver<'a> {
    snapshot: &'a SchemaSnapshot,
    warnings: Vec<String>,
}

impl Resolver<'_> {
    fn query(&mut self, q: &Query, ctes: &BTreeMap<String, Columns>, outer: &[Frame]) -> Result<Columns, SqlError> {
        let mut env = ctes.clone();
        if let Some(with) = &q.with {
            for cte in &with.cte_tables {
                let name = norm(&cte.alias.name);
                if with.recursive {
                    env.insert(name.clone(), None);
                }
                let mut cols = self.query(&cte.query, &env, outer)?;
                if !cte.alias.columns.is_empty() {
                    cols = Some(cte.alias.columns.iter().map(|c| norm(&c.name)).collect());
                }
                env.insert(name, cols);
            }
        }
        let out = self.set_expr(&q.body, &env, outer)?;
        if let Some(order_by) = &q.order_by {
            if let OrderByKind::Expressions(items) = &order_by.kind {
                let mut frame = out.frame.clone().unwrap_or_default();
                if let Some(cols) = &out.columns {
                    frame.aliases.extend(cols.iter().cloned());
                }
                let mut scope = outer.to_vec();
                scope.push(frame);
                for item in items {
                    self.expr(&item.expr, &env, &scope)?;
                }
            }
        }
        Ok(out.columns)
    }

    fn set_expr(&mut self, body: &SetExpr, env: &BTreeMap<String, Columns>, outer: &[Frame]) -> Result<SetOutput, SqlError> {
        match body {
            SetExpr::Select(select) => self.select(select, env, outer),
            SetExpr::Query(q) => Ok(SetOutput { columns: self.query(q, env, outer)?, frame: None }),
            SetExpr::SetOperation { left, right, .. } => {
                let l = self.set_expr(left, env, outer)?;
                self.set_expr(right, env, outer)?;
                Ok(SetOutput { columns: l.columns, frame: None })
            }
            SetExpr::Values(values) => {
                for row in &values.rows {
                    for e in &row.content {
                        self.expr(e, env, outer)?;
                    }
                }
                Ok(SetOutput { columns: None, frame: None })
            }
            SetExpr::Table(t) => {
                let name = t.table_name.clone().unwrap_or_default().to_lowercase();
                let cols = self.relation_columns(&name, env)?;
                Ok(SetOutput { columns: cols, frame: None })
            }
            other => Err(SqlError::ReadOnlyViolation(
                other.to_string().split_whitespace().next().unwrap_or("UNKNOWN").to_ascii_uppercase(),
            )),
        }
    }

    fn relation_columns(&self, name: &str, env: &BTreeMap<String, Columns>) -> Result<Columns, SqlError> {
        if let Some(cols) = env.get(name) {
            return Ok(cols.clone());
        }
        match self.snapshot.table(name) {
            Some(t) => Ok(Some(t.columns.iter().map(|c| c.name.to_lowercase()).collect())),
            None => Err(SqlError::UnknownTable(name.to_string())),
        }
    }

    fn table_factor(
        &mut self,
        factor: &TableFactor,
        env: &BTreeMap<String, Columns>,
        outer: &[Frame],
        frame: &mut Frame,
    ) -> Result<(), SqlError> {
        match factor {
            TableFactor::Table { name, alias, args, .. } => {
                let table = last_part(name);
                let columns = if args.is_some() {
                    None
                } else {
                    let display = name.to_string().trim_matches('"').to_string();
                    self.relation_columns(&table, env).map_err(|_| SqlError::UnknownTable(display))?
                };
                let binding = alias.as_ref().map(|a| norm(&a.name)).unwrap_or(table);
                let columns = match alias {
                    Some(a) if !a.columns.is_empty() => Some(a.columns.iter().map(|c| norm(&c.name)).collect()),
                    _ => columns,
                };
                frame.bindings.push(Binding { name: binding, columns });
            }
            TableFactor::Derived { subquery, alias, lateral, .. } => {
                let mut scope = outer.to_vec();
                if *lateral {
                    scope.push(frame.clone());
                }
                let mut columns = self.query(subquery, env, &scope)?;
                if let Some(a) = alias {
                    if !a.columns.is_empty() {
                        columns = Some(a.columns.iter().map(|c| norm(&c.name)).collect());
                    }
                }
                let name = alias.as_ref().map(|a| norm(&a.name)).unwrap_or_default();
                frame.bindings.push(Binding { name, columns });
            }
            TableFactor::NestedJoin { table_with_joins, alias } => {
                let mut inner = Frame::default();
                self.table_with_joins(table_with_joins, env, outer, &mut inner)?;
                match alias {
                    Some(a) => {
                        let cols = inner
                            .bindings
                            .iter()
                            .map(|b| b.columns.clone())
                            .try_fold(BTreeSet::new(), |mut acc, c| {
                                acc.extend(c?);
                                Some(acc)
                            });
                        frame.bindings.push(Binding { name: norm(&a.name), columns: cols });
                    }
                    None => frame.bindings.extend(inner.bindings),
                }
            }
            other => {
                let name = match other {
                    TableFactor::TableFunction { alias, .. }
                    | TableFactor::Function { alias, .. }
                    | TableFactor::UNNEST { alias, .. } => alias.as_ref().map(|a| norm(&a.name)),
                    _ => None,
                };
                frame.bindings.push(Binding { name: name.unwrap_or_default(), columns: None });
            }
        }
        Ok(())
    }

    fn table_with_joins(
        &mut self,
        twj: &TableWithJoins,
        env: &BTreeMap<String, Columns>,
        outer: &[Frame],
        frame: &mut Frame,
    ) -> Result<(), SqlError> {
        self.table_factor(&twj.relation, env, outer, frame)?;
        for join in &twj.joins {
            self.table_factor(&join.relation, env, outer, frame)?;
        }
        Ok(())
    }

    fn join_constraint(op: &JoinOperator) -> Option<&JoinConstraint> {
        match op {
            JoinOperator::Join(c)
            | JoinOperator::Inner(c)
            | JoinOperator::Left(c)
            | JoinOperator::LeftOuter(c)
            | JoinOperator::Right(c)
            | JoinOperator::RightOuter(c)
            | JoinOperator::FullOuter(c)
            | JoinOperator::CrossJoin(c)
            | JoinOperator::Semi(c)
            | JoinOperator::LeftSemi(c)
            | JoinOperator::RightSemi(c)
            | JoinOperator::Anti(c)
            | JoinOperator::LeftAnti(c)
            | JoinOperator::RightAnti(c) => Some(c),
            JoinOperator::StraightJoin(c) => Some(c),
            _ => None,
        }
    }

    fn select(&mut self, sel: &Select, env: &BTreeMap<String, Columns>, outer: &[Frame]) -> Result<SetOutput, SqlError> {
        let mut frame = Frame::default();
        for twj in &sel.from {
            self.table_with_joins(twj, env, outer, &mut frame)?;
        }
        if sel.from.len() > 1 && sel.selection.is_none() {
            self.warnings.push(CARTESIAN_WARNING.to_string());
        }

        for item in &sel.projection {
            if let SelectItem::ExprWithAlias { alias, .. } = item {
                frame.aliases.insert(norm(alias));
            }
        }

        let mut scope = outer.to_vec();
        scope.push(frame.clone());

        for twj in &sel.from {
            for join in &twj.joins {
                match Self::join_constraint(&join.join_operator) {
                    Some(JoinConstraint::On(e)) => self.expr(e, env, &scope)?,
                    Some(JoinConstraint::Using(cols)) => {
                        for c in cols {
                            let ident = Ident::new(last_part(c));
                            self.resolve(&[ident], &scope)?;
                        }
                    }
                    Some(JoinConstraint::Natural) => {}
                    Some(JoinConstraint::None) => self.warnings.push(CARTESIAN_WARNING.to_string()),
                    None => {}
                }
                if matches!(join.join_operator, JoinOperator::CrossJoin(_)) {
                    self.warnings.push(CARTESIAN_WARNING.to_string());
                }
            }
        }

        let mut output = Some(BTreeSet::new());
        for item in &sel.projection {
            match item {
                SelectItem::UnnamedExpr(e) => {
                    self.expr(e, env, &scope)?;
                    let name = match e {
                        Expr::Identifier(i) => norm(i),
                        Expr::CompoundIdentifier(parts) => parts.last().map(norm).unwrap_or_default(),
                        other => other.to_string().to_lowercase(),
                    };
                    if let Some(o) = output.as_mut() {
                        o.insert(name);
                    }
                }
                SelectItem::ExprWithAlias { expr, alias } => {
                    self.expr(expr, env, &scope)?;
                    if let Some(o) = output.as_mut() {
                        o.insert(norm(alias));
                    }
                }
                SelectItem::ExprWithAliases { expr, aliases } => {
                    self.expr(expr, env, &scope)?;
                    if let Some(o) = output.as_mut() {
                        o.extend(aliases.iter().map(norm));
                    }
                }
                SelectItem::QualifiedWildcard(kind, _) => {
                    let cols = match kind {
                        SelectItemQualifiedWildcardKind::ObjectName(name) => {
                            let q = last_part(name);
                            let b = frame
                                .bindings
                                .iter()
                                .find(|b| b.name == q)
                                .ok_or_else(|| SqlError::UnknownTable(q.clone()))?;
                            b.columns.clone()
                        }
                        SelectItemQualifiedWildcardKind::Expr(e) => {
                            self.expr(e, env, &scope)?;
                            None
                        }
                    };
                    output = match (output, cols) {
                        (Some(mut o), Some(c)) => {
                            o.extend(c);
                            Some(o)
                        }
                        _ => None,
                    };
                }
                SelectItem::Wildcard(_) => {
                    for b in &frame.bindings {
                        output = match (output, &b.columns) {
                            (Some(mut o), Some(c)) => {
                                o.extend(c.iter().cloned());
                                Some(o)
                            }
                            _ => None,
                        };
                    }
                }
            }
        }

        for e in sel.selection.iter().chain(sel.having.iter()).chain(sel.qualify.iter()).chain(sel.prewhere.iter()) {
            self.expr(e, env, &scope)?;
        }
        if let GroupByExpr::Expressions(exprs, _) = &sel.group_by {
            for e in exprs {
                self.expr(e, env, &scope)?;
            }
        }
        for o in &sel.sort_by {
            self.expr(&o.expr, env, &scope)?;
        }
        Ok(SetOutput { columns: output, frame: Some(frame) })
    }

    fn expr(&mut self, e: &Expr, env: &BTreeMap<String, Columns>, scope: &[Frame]) -> Result<(), SqlError> {
        let mut collector = IdentCollector::default();
        let _ = e.visit(&mut collector);
        for parts in &collector.idents {
            self.resolve(parts, scope)?;
        }
        for sub in &collector.subqueries {
            self.query(sub, env, scope)?;
        }
        Ok(())
    }

    fn resolve(&self, parts: &[Ident], scope: &[Frame]) -> Result<(), SqlError> {
        match parts {
            [] => Ok(()),
            [single] => {
                let name = norm(single);
                if BUILTIN_IDENTS.contains(&name.as_str()) {
                    return Ok(());
                }
                for frame in scope.iter().rev() {
                    if frame.aliases.contains(&name) {
                        return Ok(());
                    }
                    for b in &frame.bindings {
                        match &b.columns {
                            None => return Ok(()),
                            Some(cols) if cols.contains(&name) => return Ok(()),
                            _ => {}
                        }
                    }
                }
                Err(SqlError::UnknownColumn(single.value.clone()))
            }
            many => {
                let column = norm(&many[many.len() - 1]);
                let qualifier = norm(&many[many.len() - 2]);
                for frame in scope.iter().rev() {
                    if let Some(b) = frame.bindings.iter().find(|b| b.name == qualifier) {
                        return match &b.columns {
                            Some(cols) if !cols.contains(&column) && !BUILTIN_IDENTS.contains(&column.as_str()) => {
                                Err(SqlError::UnknownColumn(
                                    many.iter().map(|i| i.value.as_str()).collect::<Vec<_>>().join("."),
                                ))
                            }
                            _ => Ok(()),
                        };
                    }
                }
                Err(SqlError::UnknownTable(many[many.len() - 2].value.clone()))
            }
        }
    }
}
