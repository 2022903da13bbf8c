//! Regenerates the bundled fixture environments.
//!
//!     cargo run -p guiscout --example gen_fixtures -- [out_dir]
//!
//! Output (default `fixtures/`): `office_mini.json`, the benchmark suite under
//! `suite/`, icon templates under `templates/<env>/`, and one
//! `<env>.manifest.json` per env holding the oracle counts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use guiscout::model::{ActionKind, BBox, ElementKind, ElementMeta};
use guiscout::parser::TemplateSidecar;
use guiscout::raster;
use guiscout::sim::{oracle_enumerate, ElementDef, EnvDefinition, EnvFile, Render, ScreenSize, StateDef, TemplateRef};
use image::{DynamicImage, GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const SCREEN: ScreenSize = ScreenSize { w: 320, h: 200 };
const MARGIN: u32 = 4;
const GAP: u32 = 6;
const ROW: u32 = 20;
const ERROR_BG: [u8; 3] = [250, 222, 222];

/// One state under construction, laid out left to right in rows.
struct Screen {
    background: [u8; 3],
    is_error: bool,
    elements: Vec<ElementDef>,
    x: u32,
    y: u32,
}

impl Screen {
    fn new(background: [u8; 3]) -> Self {
        Self { background, is_error: false, elements: Vec::new(), x: MARGIN, y: MARGIN }
    }

    fn error() -> Self {
        Self { is_error: true, ..Self::new(ERROR_BG) }
    }

    fn place(&mut self, w: u32, h: u32) -> BBox {
        if self.x + w + MARGIN > SCREEN.w {
            self.newline();
        }
        assert!(self.y + ROW <= SCREEN.h, "screen overflow");
        let b = BBox::new(self.x, self.y + (ROW - h) / 2, w, h);
        self.x += w + GAP;
        b
    }

    fn newline(&mut self) -> &mut Self {
        if self.x > MARGIN {
            self.x = MARGIN;
            self.y += ROW;
        }
        self
    }

    fn text(&mut self, name: &str, to: Option<&str>) -> &mut Self {
        self.text_with(name, to, None)
    }

    fn text_with(&mut self, name: &str, to: Option<&str>, meta: Option<ElementMeta>) -> &mut Self {
        let bbox = self.place(6 * name.chars().count() as u32, 8);
        self.elements.push(ElementDef {
            name: name.into(),
            kind: ElementKind::Text,
            bbox,
            render: Render::Text(name.into()),
            meta,
            transitions: transitions(to),
        });
        self
    }

    fn scroll(&mut self, to: &str) -> &mut Self {
        let el = self.elements.last_mut().expect("scroll needs an element");
        el.transitions.insert(ActionKind::Scroll, to.into());
        self
    }
}

fn transitions(to: Option<&str>) -> BTreeMap<ActionKind, String> {
    to.map(|t| BTreeMap::from([(ActionKind::Click, t.to_owned())])).unwrap_or_default()
}

fn slug(name: &str) -> String {
    name.to_lowercase().chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

/// Environment under construction plus its icon set.
struct Builder {
    env_id: String,
    category: Option<String>,
    rng: ChaCha8Rng,
    initial: String,
    states: BTreeMap<String, StateDef>,
    templates: BTreeMap<String, (TemplateRef, GrayImage)>,
}

impl Builder {
    fn new(env_id: &str, category: Option<&str>, seed: u64, initial: &str) -> Self {
        Self {
            env_id: env_id.into(),
            category: category.map(Into::into),
            rng: ChaCha8Rng::seed_from_u64(seed),
            initial: initial.into(),
            states: BTreeMap::new(),
            templates: BTreeMap::new(),
        }
    }

    fn background(&mut self) -> [u8; 3] {
        [self.rng.random_range(215..=245), self.rng.random_range(215..=245), self.rng.random_range(215..=245)]
    }

    /// Two-level random tile, 12 to 16 pixels a side.
    fn make_template(&mut self, name: &str, function: &str) -> (TemplateRef, GrayImage) {
        let (w, h) = (self.rng.random_range(12..=16), self.rng.random_range(12..=16));
        let dark = self.rng.random_range(20..=80u8);
        let light = self.rng.random_range(170..=240u8);
        let img = GrayImage::from_fn(w, h, |_, _| Luma([if self.rng.random_bool(0.5) { dark } else { light }]));
        let dark_share = img.pixels().filter(|p| p.0[0] == dark).count() * 100 / (w * h) as usize;
        let shape = format!("A {w} by {h} speckled tile, about {dark_share} percent dark");
        let id = slug(name);
        let tref = TemplateRef {
            template_id: id.clone(),
            path: format!("../templates/{}/{id}.png", self.env_id),
            name: name.into(),
            meta: Some(ElementMeta { function_desc: Some(function.into()), shape_desc: Some(shape), neighbors_desc: None }),
        };
        (tref, img)
    }

    fn icon(&mut self, screen: &mut Screen, name: &str, function: &str, to: Option<&str>) {
        if !self.templates.contains_key(name) {
            let t = self.make_template(name, function);
            self.templates.insert(name.into(), t);
        }
        let (tref, img) = &self.templates[name];
        let bbox = screen.place(img.width(), img.height());
        screen.elements.push(ElementDef {
            name: name.into(),
            kind: ElementKind::Icon,
            bbox,
            render: Render::Icon(tref.template_id.clone()),
            meta: None,
            transitions: transitions(to),
        });
    }

    fn add(&mut self, id: &str, screen: Screen) {
        let def = StateDef { background: screen.background, is_error: screen.is_error, elements: screen.elements };
        assert!(self.states.insert(id.into(), def).is_none(), "state {id} defined twice");
    }

    fn error_state(&mut self, id: &str, message: &str, dismiss: &str) {
        let mut s = Screen::error();
        s.text(message, None).text(dismiss, None);
        self.add(id, s);
    }

    /// Writes `<dir>/<env_id>.json`, its templates and manifest; returns the
    /// validated definition.
    fn write(self, root: &Path, dir: &Path) -> EnvDefinition {
        let tdir = root.join("templates").join(&self.env_id);
        std::fs::create_dir_all(&tdir).unwrap();
        std::fs::create_dir_all(dir).unwrap();
        let mut refs = Vec::new();
        for (tref, img) in self.templates.values() {
            let png = raster::encode_png(&DynamicImage::ImageLuma8(img.clone())).unwrap();
            std::fs::write(tdir.join(format!("{}.png", tref.template_id)), png).unwrap();
            let side = TemplateSidecar { template_id: tref.template_id.clone(), name: tref.name.clone(), meta: tref.meta.clone() };
            std::fs::write(tdir.join(format!("{}.json", tref.template_id)), pretty(&side)).unwrap();
            let mut tref = tref.clone();
            // env files live one level below the fixtures root or at it
            if dir == root {
                tref.path = tref.path.trim_start_matches("../").to_owned();
            }
            refs.push(tref);
        }
        let file = EnvFile {
            env_id: self.env_id.clone(),
            category: self.category.clone(),
            screen: SCREEN,
            initial_state: self.initial.clone(),
            templates: refs,
            states: self.states,
        };
        let path = dir.join(format!("{}.json", self.env_id));
        std::fs::write(&path, pretty(&file)).unwrap();
        let def = EnvDefinition::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let manifest = Manifest::of(&def);
        std::fs::write(dir.join(format!("{}.manifest.json", self.env_id)), pretty(&manifest)).unwrap();
        println!(
            "{}: {} states, {} reachable, {} names, {} templates, unique names {}",
            manifest.env_id,
            manifest.states,
            manifest.reachable_states,
            manifest.element_names,
            manifest.templates,
            manifest.globally_unique_names
        );
        def
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).unwrap() + "\n"
}

/// Oracle counts recorded next to each env file.
#[derive(Serialize)]
struct Manifest {
    env_id: String,
    category: Option<String>,
    states: usize,
    reachable_states: usize,
    element_names: usize,
    feasible_actions: usize,
    error_states: usize,
    templates: usize,
    globally_unique_names: bool,
    click_only: bool,
}

impl Manifest {
    fn of(def: &EnvDefinition) -> Self {
        let o = oracle_enumerate(def);
        Self {
            env_id: def.env_id().into(),
            category: def.category().map(Into::into),
            states: def.state_count(),
            reachable_states: o.reachable_states.len(),
            element_names: o.element_names.len(),
            feasible_actions: o.feasible_actions.len(),
            error_states: o.error_states.len(),
            templates: def.templates().len(),
            globally_unique_names: def.has_globally_unique_names(),
            click_only: def.is_click_only(),
        }
    }
}

/// Small office app: twelve states, every element name used once.
fn office_mini(root: &Path) -> EnvDefinition {
    let mut b = Builder::new("office_mini", Some("productive"), 11, "home");
    let bg = [236, 236, 236];

    let mut s = Screen::new(bg);
    b.icon(&mut s, "New Doc", "Creates a new document", Some("new"));
    b.icon(&mut s, "Open File", "Opens an existing file", Some("open"));
    b.icon(&mut s, "Save File", "Saves the current document", None);
    b.icon(&mut s, "Print Doc", "Opens the print dialog", Some("print"));
    s.newline();
    s.text("Menu Edit", Some("edit")).text("Menu View", Some("view"));
    s.newline();
    s.text_with("Untitled", None, Some(ElementMeta { neighbors_desc: Some("The document title line".into()), ..Default::default() }));
    b.add("home", s);

    let mut s = Screen::new([226, 234, 244]);
    s.text("Blank Page", Some("blank")).text("Letter Template", Some("letter")).newline();
    s.text("Close New", Some("home"));
    b.add("new", s);

    let mut s = Screen::new([232, 240, 226]);
    s.text("Recent Report", Some("report")).text("Recent Notes", None).newline();
    b.icon(&mut s, "Browse Folder", "Browses folders on disk", Some("locked"));
    s.text("Close Open", Some("home"));
    b.add("open", s);

    let mut s = Screen::new([240, 236, 224]);
    s.text("Printer One", None);
    b.icon(&mut s, "Print Now", "Sends the document to the printer", Some("printer_down"));
    s.newline();
    s.text("Close Print", Some("home"));
    b.add("print", s);

    let mut s = Screen::new([230, 230, 242]);
    s.text("Undo Typing", None).text("Redo Typing", None).newline().text("Find Replace", Some("find"));
    b.add("edit", s);

    let mut s = Screen::new([242, 230, 236]);
    s.text("Zoom In", None).text("Zoom Out", None).newline().text("Close View", Some("home"));
    b.add("view", s);

    let mut s = Screen::new([244, 244, 244]);
    s.text("Blank Body", None).newline().text("Back From Blank", Some("new"));
    b.add("blank", s);

    let mut s = Screen::new([238, 242, 236]);
    s.text("Letter Body", None);
    b.icon(&mut s, "Letter Seal", "Adds a seal to the letter", None);
    b.add("letter", s);

    let mut s = Screen::new([236, 240, 244]);
    s.text("Report Body", None).text("Report Chart", None);
    b.add("report", s);

    let mut s = Screen::new([244, 238, 230]);
    s.text("Find Field", None).text("Replace All", None);
    b.add("find", s);

    b.error_state("locked", "Error: folder is locked", "Dismiss Locked");
    b.error_state("printer_down", "Error: printer offline", "Dismiss Printer");
    b.write(root, root)
}

/// Ribbon word processor: shared tab bar, per-tab tool icons, dialogs and
/// nested option pages.
fn ribbon_writer(dir: &Path, root: &Path) -> EnvDefinition {
    let tabs = ["File", "Home", "Insert", "Layout", "Review", "View"];
    let tools: [[&str; 6]; 6] = [
        ["Open", "Export", "Share", "Info", "Print", "Account"],
        ["Paste", "Font", "Paragraph", "Styles", "Bold", "Italic"],
        ["Table", "Picture", "Chart", "Link", "Symbol", "Header"],
        ["Margins", "Columns", "Breaks", "Spacing", "Indent", "Orient"],
        ["Spelling", "Comments", "Track", "Compare", "Protect", "Count"],
        ["Zoom", "Ruler", "Gridlines", "Outline", "Focus", "Split"],
    ];
    let pages = ["Basic", "Extra"];
    let mut b = Builder::new("ribbon_writer", Some("productive"), 21, "tab_home");
    let tab_state = |t: &str| format!("tab_{}", t.to_lowercase());

    for (ti, tab) in tabs.iter().enumerate() {
        let mut s = Screen::new(b.background());
        for t in tabs {
            s.text(t, (t != *tab).then(|| tab_state(t)).as_deref());
        }
        s.newline();
        for (k, tool) in tools[ti].iter().enumerate() {
            let name = format!("{tool} Tool");
            // the first three tools of every tab open a dialog
            let to = (k < 3).then(|| format!("dlg_{}", slug(tool)));
            b.icon(&mut s, &name, &format!("Opens the {tool} controls"), to.as_deref());
        }
        s.newline();
        s.text("Document Body", None).text("Page Count", None).text("Word Count", None);
        b.add(&tab_state(tab), s);

        for (k, tool) in tools[ti].iter().take(3).enumerate() {
            let back = tab_state(tab);
            let mut s = Screen::new(b.background());
            s.text(&format!("{tool} Dialog"), None).newline();
            for page in pages {
                s.text(&format!("{tool} {page}"), Some(&format!("page_{}_{}", slug(tool), slug(page))));
            }
            s.newline();
            for opt in ["Alpha", "Beta", "Gamma"] {
                s.text(&format!("{tool} {opt}"), None);
            }
            s.newline();
            let err = (ti + k) % 5 == 0;
            s.text("OK", Some(&back)).text("Cancel", Some(&back));
            if err {
                s.text("Apply", Some(&format!("err_{}", slug(tool))));
            }
            b.add(&format!("dlg_{}", slug(tool)), s);
            if err {
                b.error_state(
                    &format!("err_{}", slug(tool)),
                    &format!("Error: {tool} could not be applied"),
                    "Close Message",
                );
            }
            for page in pages {
                let mut s = Screen::new(b.background());
                s.text(&format!("{tool} {page} Page"), None).newline();
                for opt in ["One", "Two", "Three", "Four"] {
                    s.text(&format!("{tool} {page} {opt}"), None);
                }
                s.newline();
                b.icon(&mut s, &format!("{tool} {page} Preview"), &format!("Previews the {tool} {page} settings"), None);
                s.newline();
                s.text("Back", Some(&format!("dlg_{}", slug(tool))));
                b.add(&format!("page_{}_{}", slug(tool), slug(page)), s);
            }
        }
    }
    b.write(root, dir)
}

/// Drawing app: a tool palette opening panels, each with sub-panels and an
/// apply step. Every name appears in exactly one state.
fn panel_studio(dir: &Path, root: &Path) -> EnvDefinition {
    let tools = ["Brush", "Eraser", "Fill", "Lasso", "Shapes", "Layers", "Filters", "Colors"];
    let subs = ["Presets", "Advanced", "Blending"];
    let mut b = Builder::new("panel_studio", Some("creative"), 31, "canvas");

    let mut s = Screen::new([60, 62, 70]);
    for t in tools {
        b.icon(&mut s, &format!("{t} Palette"), &format!("Opens the {t} panel"), Some(&format!("panel_{}", slug(t))));
    }
    s.newline();
    s.text("Canvas Area", None).text("Zoom Level", None).text("Studio Title", None).newline();
    s.text("Cursor Position", None).text("Color Readout", None).text("Memory Usage", None);
    b.add("canvas", s);

    for (ti, t) in tools.iter().enumerate() {
        let panel = format!("panel_{}", slug(t));
        let mut s = Screen::new([70, 72, 84]);
        s.text(&format!("{t} Panel"), None).text(&format!("Close {t}"), Some("canvas")).newline();
        for sub in subs {
            s.text(&format!("{t} {sub}"), Some(&format!("sub_{}_{}", slug(t), slug(sub))));
        }
        s.newline();
        b.icon(&mut s, &format!("{t} Preview"), &format!("Shows a preview of the {t} tool"), None);
        for opt in ["Soft", "Hard", "Wide"] {
            s.text(&format!("{t} {opt}"), None);
        }
        s.newline().text(&format!("{t} Hint"), None).text(&format!("{t} Shortcut"), None);
        b.add(&panel, s);

        for (si, sub) in subs.iter().enumerate() {
            let id = format!("sub_{}_{}", slug(t), slug(sub));
            let mut s = Screen::new([80, 80, 92]);
            s.text(&format!("{t} {sub} Title"), None).newline();
            for opt in ["Low", "Mid", "High", "Max"] {
                s.text(&format!("{t} {sub} {opt}"), None);
            }
            s.newline();
            b.icon(&mut s, &format!("{t} {sub} Swatch"), &format!("Picks a swatch for {t} {sub}"), None);
            s.text(&format!("Apply {t} {sub}"), Some(&format!("{id}_applied")));
            s.text(&format!("Done {t} {sub}"), Some(&panel));
            let err = (ti * 3 + si) % 4 == 1;
            if err {
                s.newline().text(&format!("Reset {t} {sub}"), Some(&format!("{id}_failed")));
            }
            b.add(&id, s);

            let mut s = Screen::new([76, 88, 80]);
            s.text(&format!("{t} {sub} Applied"), None).newline();
            s.text(&format!("Undo {t} {sub}"), Some(&id)).text(&format!("Keep {t} {sub}"), Some(&panel));
            b.add(&format!("{id}_applied"), s);
            if err {
                b.error_state(
                    &format!("{id}_failed"),
                    &format!("Error: {t} {sub} reset failed"),
                    &format!("Dismiss {t} {sub}"),
                );
            }
        }
    }
    b.write(root, dir)
}

/// News site: sections of headlines, articles with cross links to other
/// sections and comment threads that sometimes fail to load.
fn news_portal(dir: &Path, root: &Path) -> EnvDefinition {
    let sections = ["World", "Sports", "Science", "Travel", "Culture", "Health", "Money", "Tech"];
    let stories = 6;
    let mut b = Builder::new("news_portal", Some("informational"), 41, "front");
    let article = |si: usize, k: usize| format!("art_{}_{k}", slug(sections[si]));

    let mut s = Screen::new([246, 244, 238]);
    b.icon(&mut s, "Site Logo", "Returns to the front page", None);
    b.icon(&mut s, "Search Site", "Searches all articles", None);
    b.icon(&mut s, "Weather Widget", "Shows the local forecast", None);
    s.newline();
    for sec in sections {
        s.text(&format!("{sec} Section"), Some(&format!("sec_{}", slug(sec))));
    }
    s.newline();
    s.text("Top Story", Some(&article(0, 0))).text("Editors Pick", Some(&article(4, 2))).newline();
    s.text("Newsletter Signup", None).text("Privacy Notice", None).text("Today Date", None);
    b.add("front", s);

    for (si, sec) in sections.iter().enumerate() {
        let mut s = Screen::new([240, 240, 232]);
        b.icon(&mut s, &format!("{sec} Banner"), &format!("Banner of the {sec} section"), None);
        s.text(&format!("Front from {sec}"), Some("front")).newline();
        for k in 0..stories {
            s.text(&format!("{sec} Headline {k}"), Some(&article(si, k))).newline();
        }
        s.text(&format!("{sec} Ad Slot"), None).text(&format!("{sec} Updated"), None);
        b.add(&format!("sec_{}", slug(sec)), s);

        for k in 0..stories {
            let mut s = Screen::new([250, 250, 246]);
            s.text(&format!("{sec} Story {k} Title"), None).newline();
            s.text(&format!("{sec} Story {k} Lead"), None).text(&format!("{sec} Story {k} Byline"), None).newline();
            for para in 1..=3 {
                s.text(&format!("{sec} Story {k} Paragraph {para}"), None).newline();
            }
            let other = (si + k + 1) % sections.len();
            s.text(&format!("Related {sec} {k}"), Some(&article(other, (k + 2) % stories)));
            s.text(&format!("Close {sec} {k}"), Some(&format!("sec_{}", slug(sec))));
            if k == 1 {
                b.icon(&mut s, &format!("Share {sec} Story"), &format!("Shares the {sec} story"), None);
            }
            if (si + k) % 7 == 3 {
                s.newline().text(&format!("Comments {sec} {k}"), Some(&format!("{}_comments", article(si, k))));
                b.error_state(
                    &format!("{}_comments", article(si, k)),
                    &format!("Error: {sec} {k} comments unavailable"),
                    &format!("Dismiss {sec} {k}"),
                );
            }
            b.add(&article(si, k), s);
        }
    }
    b.write(root, dir)
}

/// Web shop: navigation names (Home, Back, Cart) repeat across pages and
/// product grids also respond to scrolling.
fn shop_flow(dir: &Path, root: &Path) -> EnvDefinition {
    let cats = ["Shoes", "Shirts", "Bags", "Hats", "Watches", "Books"];
    let per_page = 4;
    let mut b = Builder::new("shop_flow", Some("commercial"), 51, "home");
    let list = |c: &str, p: usize| format!("list_{}_{p}", slug(c));
    let nav = |b: &mut Builder, s: &mut Screen, back: Option<&str>| {
        b.icon(s, "Home", "Goes to the shop front page", Some("home"));
        b.icon(s, "Cart", "Opens the shopping cart", Some("cart"));
        b.icon(s, "Wishlist", "Opens saved items", None);
        if let Some(back) = back {
            s.text("Back", Some(back));
        }
        s.newline();
    };

    let mut s = Screen::new([244, 240, 232]);
    b.icon(&mut s, "Cart", "Opens the shopping cart", Some("cart"));
    b.icon(&mut s, "Wishlist", "Opens saved items", None);
    b.icon(&mut s, "Account", "Opens the account page", Some("account"));
    s.newline();
    for c in cats {
        s.text(&format!("Shop {c}"), Some(&list(c, 1)));
    }
    s.newline();
    s.text("Spring Sale", None).text("Free Shipping", None);
    b.add("home", s);

    for (ci, c) in cats.iter().enumerate() {
        for page in 1..=2 {
            let mut s = Screen::new(b.background());
            nav(&mut b, &mut s, Some("home"));
            s.text(&format!("{c} Page {page}"), None).text(&format!("{c} Sort Order {page}"), None).newline();
            for k in 0..per_page {
                let n = (page - 1) * per_page + k;
                s.text(&format!("{c} Item {n}"), Some(&format!("item_{}_{n}", slug(c)))).newline();
            }
            let other = list(c, 3 - page);
            s.text(&format!("{c} {}", if page == 1 { "Next" } else { "Previous" }), Some(&other));
            s.text("Product Grid", None).scroll(&other);
            b.add(&list(c, page), s);

            for k in 0..per_page {
                let n = (page - 1) * per_page + k;
                let mut s = Screen::new(b.background());
                nav(&mut b, &mut s, Some(&list(c, page)));
                s.text(&format!("{c} Item {n} Details"), None).newline();
                s.text(&format!("{c} Item {n} Price"), None).text("Add to Cart", Some("cart_added")).newline();
                if (ci + n) % 3 == 0 {
                    s.text("Reviews", None).scroll(&format!("item_{}_{n}", slug(c)));
                }
                b.add(&format!("item_{}_{n}", slug(c)), s);
            }
        }
    }
    // the review scroll above lands on the same page; give it somewhere to go
    for st in b.states.values_mut() {
        for el in &mut st.elements {
            if el.name == "Reviews" {
                el.transitions.insert(ActionKind::Scroll, "reviews".into());
            }
        }
    }
    let mut s = Screen::new(b.background());
    nav(&mut b, &mut s, Some("home"));
    s.text("Customer Reviews", None).text("Five Stars", None);
    b.add("reviews", s);

    let mut s = Screen::new(b.background());
    nav(&mut b, &mut s, Some("home"));
    s.text("Your Cart", None).text("Cart Is Empty", None);
    b.add("cart", s);

    let mut s = Screen::new(b.background());
    nav(&mut b, &mut s, Some("home"));
    s.text("Item Added", None).text("Checkout", Some("shipping"));
    b.add("cart_added", s);

    let mut s = Screen::new(b.background());
    nav(&mut b, &mut s, Some("cart_added"));
    s.text("Shipping Address", None).text("Street Field", None).newline();
    s.text("Continue to Payment", Some("payment"));
    b.add("shipping", s);

    let mut s = Screen::new(b.background());
    nav(&mut b, &mut s, Some("shipping"));
    s.text("Card Number", None).text("Expiry Date", None).newline();
    s.text("Pay Now", Some("declined")).text("Pay on Delivery", Some("order_done"));
    b.add("payment", s);

    let mut s = Screen::new(b.background());
    nav(&mut b, &mut s, None);
    s.text("Order Placed", None).text("Order Number", None);
    b.add("order_done", s);

    let mut s = Screen::new(b.background());
    nav(&mut b, &mut s, Some("home"));
    s.text("Sign In", Some("login_failed")).text("Order History", None);
    b.add("account", s);

    b.error_state("declined", "Error: card declined", "Try Again Later");
    b.error_state("login_failed", "Error: sign in failed", "Close Notice");
    b.write(root, dir)
}

fn main() {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    if root.join("templates").exists() {
        std::fs::remove_dir_all(root.join("templates")).unwrap();
    }
    let suite = root.join("suite");
    std::fs::create_dir_all(&suite).unwrap();
    let mini = office_mini(&root);
    assert_eq!(mini.state_count(), 12);
    let defs = [ribbon_writer(&suite, &root), panel_studio(&suite, &root), news_portal(&suite, &root), shop_flow(&suite, &root)];
    let categories: BTreeSet<_> = defs.iter().filter_map(|d| d.category()).collect();
    assert_eq!(categories.len(), 4);
    for d in &defs {
        assert!(d.state_count() >= 60, "{} has only {} states", d.env_id(), d.state_count());
    }
}
