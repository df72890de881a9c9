use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{slugify, ListingSpec, SimConfig};
use crate::dndo::{Dndo, ProductClass};

pub const PAGE_MARKER: &str = r#"<meta name="market""#;
pub const LISTING_MARKER: &str = r#"class="listing-detail""#;
pub const CHALLENGE_SIGNATURE: &str = r#"id="captcha-form""#;

/// Extraction profile matching the simulator's listing template.
pub fn sim_profile_toml(market_id: &str) -> String {
    let rules: &[(&str, &str, &str)] = &[
        ("title", "selector = \"h1.listing-title\"", ""),
        ("seller", "selector = \"td.seller span.vendor-name\"", ""),
        ("category", "selector = \"td.category\"", ""),
        ("creationDate", "selector = \"td.created\"", ""),
        ("url", "selector = \"link[rel=canonical]\"\nattribute = \"href\"", ""),
        ("views", "selector = \"td.views\"", "Count"),
        ("purchases", "selector = \"td.purchases\"", "Count"),
        ("expire", "selector = \"td.expire\"", ""),
        ("productClass", "selector = \"td.class\"", "ProductClass"),
        ("originCountry", "selector = \"td.origin\"", "Country"),
        ("shippingDestinations", "selector = \"td.ships-to\"", ""),
        ("quantity", "selector = \"td.quantity\"", "Quantity"),
        ("payment", "selector = \"td.payment\"", ""),
        ("price", "pattern = 'data-price=\"([^\"]+)\"'", "Price"),
    ];
    let mut out = format!(
        "market_id = \"{market_id}\"\nlisting_marker = '{LISTING_MARKER}'\npage_marker = '{PAGE_MARKER}'\nchallenge_signature = '{CHALLENGE_SIGNATURE}'\nurl_len_bounds = [114, 120]\nmin_body_bytes = 512\n"
    );
    for (field, locate, normalize) in rules {
        out.push_str(&format!("\n[[field_rules]]\nfield = \"{field}\"\n{locate}\n"));
        if !normalize.is_empty() {
            out.push_str(&format!("post_normalize = \"{normalize}\"\n"));
        }
    }
    out
}

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
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

fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn short_hash(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..6])
}

/// Presentation choices for one listing, drawn once at generation time.
#[derive(Debug, Clone)]
pub(crate) struct ListingDisplay {
    class_text: String,
    origin_text: String,
    title_text: String,
    rating: String,
}

impl ListingDisplay {
    pub(crate) fn draw(rng: &mut ChaCha8Rng, doc: &Dndo) -> Self {
        let class = doc.product_class.as_str();
        let class_text = match rng.gen_range(0..3) {
            0 => class.to_string(),
            1 => class.to_ascii_lowercase(),
            _ => class.to_ascii_uppercase(),
        };
        let origin = doc.origin_country.clone().unwrap_or_default();
        let origin_text = if origin == "Worldwide" {
            ["Worldwide", "World Wide", "WW", " worldwide "][rng.gen_range(0..4)].to_string()
        } else {
            format!("  {origin} ")
        };
        let title = doc.title.clone().unwrap_or_default();
        let title_text = if rng.gen_bool(0.3) {
            format!("\n      {}\n    ", title.replacen(' ', "\n      ", 1))
        } else {
            title
        };
        let rating = format!("{}.{}", rng.gen_range(3..5), rng.gen_range(0..10));
        ListingDisplay {
            class_text,
            origin_text,
            title_text,
            rating,
        }
    }
}

pub(crate) struct Site<'a> {
    config: &'a SimConfig,
    host: &'a str,
    mirror: String,
}

impl<'a> Site<'a> {
    pub(crate) fn new(config: &'a SimConfig, host: &'a str) -> Self {
        let digest = Sha256::digest(format!("mirror:{host}").as_bytes());
        let label: String = digest
            .iter()
            .chain(Sha256::digest(digest).iter())
            .map(|b| (b'a' + b % 26) as char)
            .take(super::ONION_LABEL_LEN)
            .collect();
        Site {
            config,
            host,
            mirror: format!("{label}.onion"),
        }
    }

    fn abs(&self, path: &str) -> String {
        format!("http://{}{path}", self.host)
    }

    fn head(&self, title: &str, canonical: Option<&str>) -> String {
        let canonical = canonical
            .map(|c| format!("\n  <link rel=\"canonical\" href=\"{}\">", escape(c)))
            .unwrap_or_default();
        format!(
            "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n  <meta charset=\"utf-8\">\n  <meta name=\"market\" content=\"{}\">\n  <title>{}</title>{canonical}\n  <link rel=\"stylesheet\" href=\"/static/site.css\">\n</head>\n<body>\n",
            escape(&self.config.market_id),
            escape(title)
        )
    }

    fn nav(&self, imgs: &mut Vec<String>) -> String {
        let logo = self.abs("/static/img/logo.png");
        imgs.push(logo.clone());
        let mut out = format!(
            "<header class=\"top\">\n  <a href=\"/\"><img src=\"{logo}\" alt=\"{}\"></a>\n  <nav>\n    <a href=\"/\">Home</a>\n",
            escape(&self.config.market_id)
        );
        for cat in &self.config.categories {
            out.push_str(&format!(
                "    <a href=\"/category/{}\">{}</a>\n",
                slugify(&cat.name),
                escape(&cat.name)
            ));
        }
        out.push_str("    <a href=\"/about\">About</a>\n    <a href=\"/faq\">FAQ</a>\n    <a href=\"/rules\">Rules</a>\n  </nav>\n</header>\n");
        out
    }

    fn footer(&self, imgs: &mut Vec<String>) -> String {
        let badge = self.abs("/media/badge");
        imgs.push(badge.clone());
        imgs.push(self.abs("/static/img/pgp-key.gif"));
        let mirror_listing = format!("http://{}/listing/{}", self.mirror, "0".repeat(40));
        format!(
            "<footer>\n  <p>Mirrors: <a href=\"http://{mirror}/\">mirror 1</a> <a href=\"{mirror_listing}\">featured on mirror</a></p>\n  <p><a href=\"https://forum.example.org/t/market-reviews\">Reviews forum</a> <a href=\"mailto:support@example.org\">Support</a></p>\n  <a href=\"{badge}\"><img src=\"{badge}\" alt=\"verified\"></a>\n  <a href=\"/static/img/pgp-key.gif\">PGP key</a>\n  <p class=\"legal\">All listings are user-submitted. Prices may change without notice. Escrow is mandatory for new vendors.</p>\n</footer>\n</body>\n</html>\n",
            mirror = self.mirror,
        )
    }

    pub(crate) fn index_page(&self) -> (String, Vec<String>) {
        let mut imgs = Vec::new();
        let mut body = self.head(&format!("{} | Home", self.config.market_id), None);
        body.push_str(&self.nav(&mut imgs));
        body.push_str("<main>\n  <h2>Categories</h2>\n  <ul class=\"categories\">\n");
        for cat in &self.config.categories {
            let slug = slugify(&cat.name);
            let icon = self.abs(&format!("/static/img/cat-{slug}.png"));
            imgs.push(icon.clone());
            body.push_str(&format!(
                "    <li><img src=\"{icon}\" alt=\"\"> <a href=\"{}\">{}</a> <small>{}</small></li>\n",
                self.abs(&format!("/category/{slug}")),
                escape(&cat.name),
                cat.class.as_str()
            ));
        }
        let promo = self.abs("/media/promo");
        imgs.push(promo.clone());
        body.push_str(&format!(
            "  </ul>\n  <section class=\"promo\"><a href=\"{promo}\"><picture><source srcset=\"{promo}\"><img src=\"{promo}\" alt=\"promo\"></picture></a></section>\n</main>\n"
        ));
        body.push_str(&self.footer(&mut imgs));
        (body, imgs)
    }

    pub(crate) fn nav_pages(&self) -> Vec<(String, String, Vec<String>)> {
        let pages = [
            ("/about", "About", "This market connects buyers and vendors. Every order is protected by escrow and disputes are handled by staff within 72 hours."),
            ("/faq", "FAQ", "How do I deposit? Use the wallet page. How long does shipping take? Ask the vendor. Can I cancel? Only before the vendor accepts."),
            ("/rules", "Rules", "No scams, no doxxing, no off-site deals. Vendors must answer messages within 48 hours. Violations lead to a permanent ban."),
        ];
        pages
            .iter()
            .map(|(path, title, text)| {
                let mut imgs = Vec::new();
                let mut body = self.head(&format!("{} | {title}", self.config.market_id), None);
                body.push_str(&self.nav(&mut imgs));
                body.push_str(&format!("<main>\n  <h2>{title}</h2>\n  <p>{text}</p>\n</main>\n"));
                body.push_str(&self.footer(&mut imgs));
                (path.to_string(), body, imgs)
            })
            .collect()
    }

    /// Paginated category pages. Page 1 links every other page.
    pub(crate) fn category_pages(
        &self,
        name: &str,
        entries: &[(String, String)],
    ) -> Vec<(String, String, Vec<String>)> {
        let slug = slugify(name);
        let per = self.config.listings_per_page;
        let n_pages = entries.len().div_ceil(per).max(1);
        let path_of = |p: usize| {
            if p == 1 {
                format!("/category/{slug}")
            } else {
                format!("/category/{slug}?page={p}")
            }
        };
        (1..=n_pages)
            .map(|p| {
                let mut imgs = Vec::new();
                let mut body = self.head(&format!("{} | {name} | page {p}", self.config.market_id), None);
                body.push_str(&self.nav(&mut imgs));
                body.push_str(&format!("<main>\n  <h2>{}</h2>\n  <table class=\"listings\">\n", escape(name)));
                for (url, title) in entries.iter().skip((p - 1) * per).take(per) {
                    let thumb = self.abs(&format!("/media/thumb/{}", short_hash(url)));
                    imgs.push(thumb.clone());
                    body.push_str(&format!(
                        "    <tr><td><a href=\"{thumb}\"><img src=\"{thumb}\" alt=\"\"></a></td><td><a href=\"{}\">{}</a></td></tr>\n",
                        escape(url),
                        escape(title)
                    ));
                }
                body.push_str("  </table>\n  <div class=\"pager\">\n");
                let pager: Vec<usize> = if p == 1 { (1..=n_pages).collect() } else { vec![1] };
                for q in pager {
                    body.push_str(&format!("    <a href=\"{}\">{q}</a>\n", escape(&path_of(q))));
                }
                body.push_str("  </div>\n</main>\n");
                body.push_str(&self.footer(&mut imgs));
                (path_of(p), body, imgs)
            })
            .collect()
    }

    pub(crate) fn listing_page(&self, l: &ListingSpec) -> (String, Vec<String>) {
        let d = &l.doc;
        let url = d.url.as_deref().unwrap_or_default();
        let title = d.title.as_deref().unwrap_or_default();
        let mut imgs = Vec::new();
        let mut body = self.head(&format!("{} | {title}", self.config.market_id), Some(url));
        body.push_str(&self.nav(&mut imgs));
        let photo = self.abs(&format!("/static/img/listing/{}.jpg", short_hash(url)));
        let zoom = self.abs(&format!("/media/zoom/{}", short_hash(url)));
        imgs.push(photo.clone());
        imgs.push(zoom.clone());
        body.push_str(&format!(
            "<main>\n<div class=\"listing-detail\" data-price=\"{}\">\n  <h1 class=\"listing-title\">{}</h1>\n  <div class=\"gallery\"><img src=\"{photo}\" alt=\"photo\"><a href=\"{zoom}\"><img src=\"{zoom}\" data-src=\"{zoom}\" alt=\"zoom\"></a></div>\n  <table class=\"details\">\n",
            escape(d.price.raw()),
            escape(&l.display.title_text)
        ));
        let mut row = |class: &str, label: &str, value: String| {
            body.push_str(&format!(
                "    <tr><th>{label}</th><td class=\"{class}\">{value}</td></tr>\n"
            ));
        };
        row(
            "seller",
            "Vendor",
            format!(
                "<span class=\"vendor-name\">{}</span> <span class=\"rating\">({})</span>",
                escape(d.seller.as_deref().unwrap_or_default()),
                l.display.rating
            ),
        );
        row("category", "Category", escape(d.category.as_deref().unwrap_or_default()));
        row("class", "Product class", escape(&l.display.class_text));
        row("created", "Listed since", escape(d.creation_date.as_deref().unwrap_or_default()));
        if let Some(expire) = &d.expire {
            row("expire", "Ends", escape(expire));
        }
        row("views", "Views", format!("{} views", thousands(d.views.unwrap_or(0))));
        if let Some(p) = d.purchases {
            row("purchases", "Sold", format!("{} sold", thousands(p)));
        }
        row("origin", "Ships from", escape(&l.display.origin_text));
        row("ships-to", "Ships to", escape(d.shipping_destinations.as_deref().unwrap_or_default()));
        row("quantity", "In stock", escape(d.quantity.raw()));
        row("payment", "Payment", escape(d.payment.as_deref().unwrap_or_default()));
        let (amount, currency) = d.price.raw().split_once(' ').unwrap_or((d.price.raw(), ""));
        body.push_str(&format!(
            "  </table>\n  <p class=\"price\">{} <span class=\"cur\">{}</span></p>\n  <form class=\"buy\"><input type=\"image\" src=\"{}\" alt=\"Buy now\"></form>\n</div>\n",
            escape(amount),
            escape(currency),
            self.abs("/static/img/buy.png")
        ));
        imgs.push(self.abs("/static/img/buy.png"));
        let class_note = match d.product_class {
            ProductClass::Digital => "Delivered automatically after payment.",
            _ => "Shipped in discreet packaging.",
        };
        body.push_str(&format!(
            "<section class=\"description\"><p>{class_note} Contact the vendor before ordering in bulk.</p></section>\n</main>\n"
        ));
        body.push_str(&self.footer(&mut imgs));
        (body, imgs)
    }
}
