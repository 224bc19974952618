//! Minimal deterministic SVG 1.1 writer for diagram and flap figures.

pub struct Canvas {
    width: f64,
    height: f64,
    margin: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
    body: String,
}

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

impl Canvas {
    pub fn new(x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        Self { width: 640.0, height: 480.0, margin: 40.0, x_range, y_range, body: String::new() }
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let sx = (self.width - 2.0 * self.margin) / (self.x_range.1 - self.x_range.0);
        let sy = (self.height - 2.0 * self.margin) / (self.y_range.1 - self.y_range.0);
        (
            self.margin + (x - self.x_range.0) * sx,
            self.height - self.margin - (y - self.y_range.0) * sy,
        )
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], color: &str, width: f64) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| {
                let (px, py) = self.map(x, y);
                format!("{},{}", fmt(px), fmt(py))
            })
            .collect();
        self.body.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
    }

    pub fn polygon(&mut self, pts: &[(f64, f64)], fill: &str, opacity: f64) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| {
                let (px, py) = self.map(x, y);
                format!("{},{}", fmt(px), fmt(py))
            })
            .collect();
        self.body.push_str(&format!(
            "<polygon fill=\"{fill}\" fill-opacity=\"{opacity}\" stroke=\"none\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
    }

    pub fn point(&mut self, x: f64, y: f64, r: f64, color: &str) {
        let (px, py) = self.map(x, y);
        self.body.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"{r}\" fill=\"{color}\"/>\n",
            fmt(px),
            fmt(py)
        ));
    }

    pub fn label(&mut self, x: f64, y: f64, text: &str) {
        let (px, py) = self.map(x, y);
        self.body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" font-family=\"monospace\">{text}</text>\n",
            fmt(px),
            fmt(py)
        ));
    }

    pub fn finish(self, title: &str) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<!-- cuspidal {} -->\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n<title>{title}</title>\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            env!("CARGO_PKG_VERSION"),
            self.width,
            self.height,
            self.width,
            self.height,
            self.body
        )
    }
}
