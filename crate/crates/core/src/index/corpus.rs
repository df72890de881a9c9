use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use super::IndexError;
use crate::dndo::{AnalystFields, Dndo, ProductClass, format_timestamp};

/// Largest single analyst comment accepted.
pub const DEFAULT_COMMENT_CAP: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchField {
    Title,
    Seller,
    Category,
    Notes,
}

impl SearchField {
    pub const ALL: [SearchField; 4] = [
        SearchField::Title,
        SearchField::Seller,
        SearchField::Category,
        SearchField::Notes,
    ];

    pub fn parse(raw: &str) -> Option<Self> {
        match raw.to_ascii_lowercase().as_str() {
            "title" => Some(SearchField::Title),
            "seller" => Some(SearchField::Seller),
            "category" => Some(SearchField::Category),
            "notes" | "analyst_notes" | "comments" => Some(SearchField::Notes),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SearchField::Title => "title",
            SearchField::Seller => "seller",
            SearchField::Category => "category",
            SearchField::Notes => "notes",
        }
    }

    fn slot(&self) -> usize {
        *self as usize
    }

    pub fn text<'a>(&self, d: &'a Dndo) -> Option<&'a str> {
        match self {
            SearchField::Title => d.title.as_deref(),
            SearchField::Seller => d.seller.as_deref(),
            SearchField::Category => d.category.as_deref(),
            SearchField::Notes => d.analyst.notes.as_deref(),
        }
    }
}

/// Exact and range predicates over typed fields. Unset members match all.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchFilters {
    pub product_class: Option<ProductClass>,
    pub flagged: Option<bool>,
    pub viewed: Option<bool>,
    pub origin_country: Option<String>,
    pub seller: Option<String>,
    pub payment: Option<String>,
    pub currency: Option<String>,
    pub price_min_minor: Option<u64>,
    pub price_max_minor: Option<u64>,
    pub collected_from: Option<NaiveDateTime>,
    pub collected_to: Option<NaiveDateTime>,
}

impl SearchFilters {
    pub fn matches(&self, d: &Dndo) -> bool {
        if let Some(c) = self.product_class {
            if d.product_class != c {
                return false;
            }
        }
        if let Some(f) = self.flagged {
            if d.analyst.flagged.unwrap_or(false) != f {
                return false;
            }
        }
        if let Some(v) = self.viewed {
            if d.analyst.has_viewed.unwrap_or(false) != v {
                return false;
            }
        }
        let eq = |want: &Option<String>, have: &Option<String>| match want {
            Some(w) => have.as_deref() == Some(w.as_str()),
            None => true,
        };
        if !eq(&self.origin_country, &d.origin_country)
            || !eq(&self.seller, &d.seller)
            || !eq(&self.payment, &d.payment)
        {
            return false;
        }
        let price_filtered = self.currency.is_some()
            || self.price_min_minor.is_some()
            || self.price_max_minor.is_some();
        if price_filtered {
            let Some(amount) = d.price.amount_minor_units() else {
                return false;
            };
            if let Some(c) = &self.currency {
                if d.price.currency() != Some(c.as_str()) {
                    return false;
                }
            }
            if self.price_min_minor.is_some_and(|m| amount < m)
                || self.price_max_minor.is_some_and(|m| amount > m)
            {
                return false;
            }
        }
        if self.collected_from.is_some_and(|t| d.date_collected < t)
            || self.collected_to.is_some_and(|t| d.date_collected > t)
        {
            return false;
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub doc_id: String,
    pub score: f64,
    pub matched_fields: Vec<SearchField>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Mutation {
    Viewed,
    /// `value: None` toggles; `Some(v)` sets.
    Flag {
        #[serde(default)]
        value: Option<bool>,
    },
    Comment {
        text: String,
    },
    Close,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationEvent {
    pub seq: u64,
    pub doc_id: String,
    pub mutation: Mutation,
    #[serde(with = "ts_format")]
    pub at: NaiveDateTime,
}

mod ts_format {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&crate::dndo::format_timestamp(t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let raw = String::deserialize(d)?;
        crate::dndo::parse_timestamp(&raw)
            .ok_or_else(|| serde::de::Error::custom(format!("bad timestamp `{raw}`")))
    }
}

pub(crate) type FieldFreqs = [u32; 4];

/// One corpus: documents, postings, typed value maps and the annotation log.
#[derive(Debug, Clone)]
pub struct CorpusIndex {
    pub(crate) name: String,
    pub(crate) docs: BTreeMap<String, Dndo>,
    pub(crate) postings: BTreeMap<String, BTreeMap<String, FieldFreqs>>,
    pub(crate) field_lens: BTreeMap<String, FieldFreqs>,
    by_class: BTreeMap<ProductClass, BTreeSet<String>>,
    by_origin: BTreeMap<String, BTreeSet<String>>,
    pub(crate) annotation_log: Vec<AnnotationEvent>,
    pub(crate) comment_cap: usize,
}

impl CorpusIndex {
    pub fn new(name: impl Into<String>) -> Self {
        CorpusIndex {
            name: name.into(),
            docs: BTreeMap::new(),
            postings: BTreeMap::new(),
            field_lens: BTreeMap::new(),
            by_class: BTreeMap::new(),
            by_origin: BTreeMap::new(),
            annotation_log: Vec::new(),
            comment_cap: DEFAULT_COMMENT_CAP,
        }
    }

    pub fn with_comment_cap(mut self, cap: usize) -> Self {
        self.comment_cap = cap;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Dndo> {
        self.docs.get(doc_id)
    }

    /// Documents in doc_id order.
    pub fn docs(&self) -> impl Iterator<Item = (&String, &Dndo)> {
        self.docs.iter()
    }

    pub fn annotation_log(&self) -> &[AnnotationEvent] {
        &self.annotation_log
    }

    pub fn last_seq(&self) -> u64 {
        self.annotation_log.last().map(|e| e.seq).unwrap_or(0)
    }

    pub fn comment_cap(&self) -> usize {
        self.comment_cap
    }

    fn remove_terms(&mut self, doc_id: &str) {
        let Some(doc) = self.docs.get(doc_id) else { return };
        let mut stems = BTreeSet::new();
        for field in SearchField::ALL {
            if let Some(text) = field.text(doc) {
                stems.extend(tokenize(text));
            }
        }
        for stem in stems {
            if let Some(list) = self.postings.get_mut(&stem) {
                list.remove(doc_id);
                if list.is_empty() {
                    self.postings.remove(&stem);
                }
            }
        }
        self.field_lens.remove(doc_id);
        let class = doc.product_class;
        if let Some(set) = self.by_class.get_mut(&class) {
            set.remove(doc_id);
        }
        if let Some(origin) = doc.origin_country.clone() {
            if let Some(set) = self.by_origin.get_mut(&origin) {
                set.remove(doc_id);
                if set.is_empty() {
                    self.by_origin.remove(&origin);
                }
            }
        }
    }

    fn add_terms(&mut self, doc_id: &str) {
        let doc = &self.docs[doc_id];
        let mut lens: FieldFreqs = [0; 4];
        let mut freqs: BTreeMap<String, FieldFreqs> = BTreeMap::new();
        for field in SearchField::ALL {
            let Some(text) = field.text(doc) else { continue };
            for stem in tokenize(text) {
                lens[field.slot()] += 1;
                freqs.entry(stem).or_insert([0; 4])[field.slot()] += 1;
            }
        }
        let class = doc.product_class;
        let origin = doc.origin_country.clone();
        for (stem, f) in freqs {
            self.postings.entry(stem).or_default().insert(doc_id.to_string(), f);
        }
        self.field_lens.insert(doc_id.to_string(), lens);
        self.by_class.entry(class).or_default().insert(doc_id.to_string());
        if let Some(origin) = origin {
            self.by_origin.entry(origin).or_default().insert(doc_id.to_string());
        }
    }

    /// Rebuilds postings and typed maps from `docs`.
    pub(crate) fn rebuild(&mut self) {
        self.postings.clear();
        self.field_lens.clear();
        self.by_class.clear();
        self.by_origin.clear();
        let ids: Vec<String> = self.docs.keys().cloned().collect();
        for id in ids {
            self.add_terms(&id);
        }
    }

    /// Inserts or replaces a document keyed by its doc_id. Scraped fields
    /// come from `d`; analyst state already held for the doc is kept, since
    /// annotations only enter through [`CorpusIndex::annotate`].
    pub fn index_record(&mut self, d: Dndo) -> String {
        let doc_id = d.doc_id();
        let mut incoming = d;
        match self.docs.get(&doc_id) {
            Some(existing) => incoming.analyst = existing.analyst.clone(),
            None => incoming.analyst = AnalystFields::default(),
        }
        if self.docs.get(&doc_id) == Some(&incoming) {
            return doc_id;
        }
        self.remove_terms(&doc_id);
        self.docs.insert(doc_id.clone(), incoming);
        self.add_terms(&doc_id);
        doc_id
    }

    pub fn remove(&mut self, doc_id: &str) -> Option<Dndo> {
        self.remove_terms(doc_id);
        self.docs.remove(doc_id)
    }

    /// Stem-matched search with AND semantics across query terms.
    ///
    /// Score is the matched term frequency divided by the length (in
    /// tokens) of the searched fields. Hits are ordered by score descending,
    /// then doc_id ascending.
    pub fn search(
        &self,
        query: &str,
        field: Option<SearchField>,
        filters: &SearchFilters,
    ) -> Result<Vec<SearchHit>, IndexError> {
        let mut terms = tokenize(query);
        terms.sort();
        terms.dedup();
        if terms.is_empty() {
            return Err(IndexError::EmptyQuery);
        }
        let in_scope = |f: &FieldFreqs| -> u32 {
            match field {
                Some(one) => f[one.slot()],
                None => f.iter().sum(),
            }
        };
        let mut lists = Vec::with_capacity(terms.len());
        for t in &terms {
            match self.postings.get(t) {
                Some(list) => lists.push(list),
                None => return Ok(Vec::new()),
            }
        }
        lists.sort_by_key(|l| l.len());
        let class_set = filters.product_class.and_then(|c| self.by_class.get(&c));
        let origin_set = filters.origin_country.as_ref().map(|o| self.by_origin.get(o));
        if filters.product_class.is_some() && class_set.is_none() {
            return Ok(Vec::new());
        }
        if let Some(None) = origin_set {
            return Ok(Vec::new());
        }

        let mut hits = Vec::new();
        'docs: for (doc_id, first) in lists[0] {
            if in_scope(first) == 0 {
                continue;
            }
            let mut tf = in_scope(first);
            for list in &lists[1..] {
                match list.get(doc_id) {
                    Some(f) if in_scope(f) > 0 => tf += in_scope(f),
                    _ => continue 'docs,
                }
            }
            if class_set.is_some_and(|s| !s.contains(doc_id))
                || origin_set.flatten().is_some_and(|s| !s.contains(doc_id))
            {
                continue;
            }
            let doc = &self.docs[doc_id];
            if !filters.matches(doc) {
                continue;
            }
            let len = in_scope(&self.field_lens[doc_id]);
            let matched_fields = SearchField::ALL
                .into_iter()
                .filter(|f| field.map_or(true, |one| one == *f))
                .filter(|f| lists.iter().any(|l| l[doc_id][f.slot()] > 0))
                .collect();
            hits.push(SearchHit {
                doc_id: doc_id.clone(),
                score: tf as f64 / len as f64,
                matched_fields,
            });
        }
        sort_hits(&mut hits);
        Ok(hits)
    }

    /// Records the mutation in the log, then applies it.
    pub fn annotate(
        &mut self,
        doc_id: &str,
        mutation: Mutation,
        at: NaiveDateTime,
    ) -> Result<Dndo, IndexError> {
        let event = self.prepare_annotation(doc_id, mutation, at)?;
        Ok(self.commit_annotation(event))
    }

    /// Validates a mutation and assigns its sequence number without
    /// applying it.
    pub fn prepare_annotation(
        &self,
        doc_id: &str,
        mutation: Mutation,
        at: NaiveDateTime,
    ) -> Result<AnnotationEvent, IndexError> {
        if !self.docs.contains_key(doc_id) {
            return Err(IndexError::UnknownDoc(doc_id.to_string()));
        }
        if let Mutation::Comment { text } = &mutation {
            if text.len() > self.comment_cap {
                return Err(IndexError::CommentTooLarge {
                    len: text.len(),
                    cap: self.comment_cap,
                });
            }
            if text.trim().is_empty() {
                return Err(IndexError::EmptyComment);
            }
        }
        Ok(AnnotationEvent {
            seq: self.last_seq() + 1,
            doc_id: doc_id.to_string(),
            mutation,
            at,
        })
    }

    pub(crate) fn commit_annotation(&mut self, event: AnnotationEvent) -> Dndo {
        self.annotation_log.push(event.clone());
        self.apply(&event);
        self.docs[&event.doc_id].clone()
    }

    fn apply(&mut self, event: &AnnotationEvent) {
        let notes_change = matches!(event.mutation, Mutation::Comment { .. });
        if notes_change {
            self.remove_terms(&event.doc_id);
        }
        let Some(doc) = self.docs.get_mut(&event.doc_id) else { return };
        apply_mutation(&mut doc.analyst, &event.mutation, event.at);
        if notes_change {
            self.add_terms(&event.doc_id);
        }
    }

    /// Clears analyst state and re-applies the whole log.
    pub fn replay_annotations(&mut self) {
        for doc in self.docs.values_mut() {
            doc.analyst = AnalystFields::default();
        }
        let log = self.annotation_log.clone();
        for event in &log {
            if let Some(doc) = self.docs.get_mut(&event.doc_id) {
                apply_mutation(&mut doc.analyst, &event.mutation, event.at);
            }
        }
        self.rebuild();
    }
}

pub(crate) fn apply_mutation(a: &mut AnalystFields, mutation: &Mutation, at: NaiveDateTime) {
    match mutation {
        Mutation::Viewed => {
            a.has_viewed = Some(true);
            a.view_date = Some(at);
        }
        Mutation::Flag { value } => {
            let current = a.flagged.unwrap_or(false);
            a.flagged = Some(value.unwrap_or(!current));
        }
        Mutation::Comment { text } => {
            let entry = format!("[{}] {}", format_timestamp(&at), text);
            a.notes = Some(match a.notes.take() {
                Some(prev) => format!("{prev}\n{entry}"),
                None => entry,
            });
        }
        Mutation::Close => a.closed_date = Some(at),
    }
}

pub fn sort_hits(hits: &mut [SearchHit]) {
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
}
