#include "facegate/cascade.hpp"

#include "facegate/error.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <system_error>

namespace facegate {

namespace {

// Minimal DOM for the subset of XML used by cascade files: elements,
// attributes, text, comments and the prolog. No DTDs, no CDATA.
struct XmlNode {
    std::string name;
    std::vector<std::pair<std::string, std::string>> attrs;
    std::string text;
    std::vector<XmlNode> children;
    std::size_t offset = 0;

    const XmlNode* child(std::string_view n) const {
        for (const auto& c : children) {
            if (c.name == n) return &c;
        }
        return nullptr;
    }
    std::optional<std::string> attr(std::string_view n) const {
        for (const auto& [k, v] : attrs) {
            if (k == n) return v;
        }
        return std::nullopt;
    }
};

class XmlParser {
public:
    explicit XmlParser(std::string_view src) : src_(src) {}

    XmlNode parse_document() {
        skip_misc();
        if (pos_ >= src_.size() || src_[pos_] != '<') fail("expected root element");
        XmlNode root = parse_element(0);
        skip_misc();
        if (pos_ != src_.size()) fail("content after root element");
        return root;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(ParseErrorKind::MalformedXml, pos_, msg);
    }

    bool starts_with(std::string_view s) const { return src_.substr(pos_, s.size()) == s; }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    void skip_until(std::string_view terminator) {
        const auto end = src_.find(terminator, pos_);
        if (end == std::string_view::npos) fail("unterminated construct, expected '" + std::string(terminator) + "'");
        pos_ = end + terminator.size();
    }

    // Whitespace, comments and processing instructions outside elements.
    void skip_misc() {
        for (;;) {
            skip_ws();
            if (starts_with("<!--")) {
                skip_until("-->");
            } else if (starts_with("<?")) {
                skip_until("?>");
            } else {
                return;
            }
        }
    }

    std::string parse_name() {
        const std::size_t start = pos_;
        while (pos_ < src_.size()) {
            const char c = src_[pos_];
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' || c == ':') {
                ++pos_;
            } else {
                break;
            }
        }
        if (pos_ == start) fail("expected a name");
        return std::string(src_.substr(start, pos_ - start));
    }

    void append_text(std::string& out, std::string_view raw) {
        std::size_t i = 0;
        while (i < raw.size()) {
            if (raw[i] != '&') {
                out.push_back(raw[i++]);
                continue;
            }
            const auto semi = raw.find(';', i);
            if (semi == std::string_view::npos) fail("unterminated entity");
            const auto ent = raw.substr(i + 1, semi - i - 1);
            if (ent == "lt") out.push_back('<');
            else if (ent == "gt") out.push_back('>');
            else if (ent == "amp") out.push_back('&');
            else if (ent == "quot") out.push_back('"');
            else if (ent == "apos") out.push_back('\'');
            else fail("unsupported entity '&" + std::string(ent) + ";'");
            i = semi + 1;
        }
    }

    XmlNode parse_element(int depth) {
        if (depth > 64) fail("nesting too deep");
        XmlNode node;
        node.offset = pos_;
        ++pos_;  // '<'
        node.name = parse_name();
        for (;;) {
            skip_ws();
            if (pos_ >= src_.size()) fail("unterminated start tag <" + node.name + ">");
            if (starts_with("/>")) {
                pos_ += 2;
                return node;
            }
            if (src_[pos_] == '>') {
                ++pos_;
                break;
            }
            std::string key = parse_name();
            skip_ws();
            if (pos_ >= src_.size() || src_[pos_] != '=') fail("expected '=' after attribute " + key);
            ++pos_;
            skip_ws();
            if (pos_ >= src_.size() || (src_[pos_] != '"' && src_[pos_] != '\'')) fail("expected quoted attribute value");
            const char quote = src_[pos_++];
            const auto end = src_.find(quote, pos_);
            if (end == std::string_view::npos) fail("unterminated attribute value");
            std::string value;
            append_text(value, src_.substr(pos_, end - pos_));
            pos_ = end + 1;
            node.attrs.emplace_back(std::move(key), std::move(value));
        }

        for (;;) {
            if (pos_ >= src_.size()) fail("missing end tag </" + node.name + ">");
            if (starts_with("<!--")) {
                skip_until("-->");
            } else if (starts_with("</")) {
                pos_ += 2;
                const std::size_t at = pos_;
                const std::string closing = parse_name();
                if (closing != node.name) {
                    pos_ = at;
                    fail("end tag </" + closing + "> does not match <" + node.name + ">");
                }
                skip_ws();
                if (pos_ >= src_.size() || src_[pos_] != '>') fail("expected '>'");
                ++pos_;
                return node;
            } else if (src_[pos_] == '<') {
                node.children.push_back(parse_element(depth + 1));
            } else {
                const auto next = src_.find('<', pos_);
                const std::size_t end = next == std::string_view::npos ? src_.size() : next;
                append_text(node.text, src_.substr(pos_, end - pos_));
                pos_ = end;
            }
        }
    }

    std::string_view src_;
    std::size_t pos_ = 0;
};

[[noreturn]] void fail_at(ParseErrorKind kind, const XmlNode& node, const std::string& msg) {
    throw ParseError(kind, node.offset, msg);
}

const XmlNode& require(const XmlNode& parent, std::string_view name) {
    const XmlNode* c = parent.child(name);
    if (c == nullptr) {
        fail_at(ParseErrorKind::MissingElement, parent,
                "<" + parent.name + "> is missing required element <" + std::string(name) + ">");
    }
    return *c;
}

std::vector<std::string_view> tokens(const std::string& text) {
    std::vector<std::string_view> out;
    std::string_view s(text);
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        const std::size_t start = i;
        while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i > start) out.push_back(s.substr(start, i - start));
    }
    return out;
}

double to_double(std::string_view tok, const XmlNode& node) {
    double v = 0.0;
    const char* first = tok.data();
    if (!tok.empty() && tok.front() == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
        fail_at(ParseErrorKind::InvalidValue, node, "<" + node.name + "> holds non-numeric '" + std::string(tok) + "'");
    }
    return v;
}

long to_long(std::string_view tok, const XmlNode& node) {
    long v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        fail_at(ParseErrorKind::InvalidValue, node, "<" + node.name + "> holds non-integer '" + std::string(tok) + "'");
    }
    return v;
}

std::vector<double> numbers(const XmlNode& node) {
    std::vector<double> out;
    for (auto t : tokens(node.text)) out.push_back(to_double(t, node));
    return out;
}

long single_long(const XmlNode& node) {
    const auto t = tokens(node.text);
    if (t.size() != 1) fail_at(ParseErrorKind::InvalidValue, node, "<" + node.name + "> must hold one integer");
    return to_long(t[0], node);
}

void parse_window(const XmlNode& cascade, CascadeModel& model) {
    if (const XmlNode* size = cascade.child("size")) {
        const auto t = tokens(size->text);
        if (t.size() != 2) fail_at(ParseErrorKind::InvalidValue, *size, "<size> must hold 'W H'");
        model.window_w = static_cast<int>(to_long(t[0], *size));
        model.window_h = static_cast<int>(to_long(t[1], *size));
    } else {
        model.window_w = static_cast<int>(single_long(require(cascade, "width")));
        model.window_h = static_cast<int>(single_long(require(cascade, "height")));
    }
    if (model.window_w < 4 || model.window_h < 4) {
        fail_at(ParseErrorKind::InvalidValue, cascade, "base window must be at least 4x4");
    }
}

WeakStump parse_stump(const XmlNode& weak) {
    const XmlNode& nodes_el = require(weak, "internalNodes");
    const XmlNode& leaves_el = require(weak, "leafValues");
    const auto nodes = tokens(nodes_el.text);
    const auto leaves = numbers(leaves_el);
    if (nodes.size() > 4) {
        fail_at(ParseErrorKind::NonStumpTree, nodes_el,
                "weak classifier has " + std::to_string(nodes.size() / 4) + " internal nodes; only stumps are supported");
    }
    if (nodes.size() != 4) fail_at(ParseErrorKind::InvalidValue, nodes_el, "<internalNodes> must hold 4 values");
    const long left = to_long(nodes[0], nodes_el);
    const long right = to_long(nodes[1], nodes_el);
    const long feature = to_long(nodes[2], nodes_el);
    const double threshold = to_double(nodes[3], nodes_el);
    if (left > 0 || right > 0) {
        fail_at(ParseErrorKind::NonStumpTree, nodes_el, "stump children must reference leaves");
    }
    if (static_cast<std::size_t>(-left) >= leaves.size() || static_cast<std::size_t>(-right) >= leaves.size()) {
        fail_at(ParseErrorKind::InvalidValue, leaves_el, "leaf index out of range");
    }
    if (leaves.size() != 2) {
        fail_at(ParseErrorKind::NonStumpTree, leaves_el, "stump must have exactly 2 leaf values");
    }
    if (feature < 0) fail_at(ParseErrorKind::InvalidValue, nodes_el, "negative feature index");
    return WeakStump{static_cast<std::size_t>(feature), threshold,
                     leaves[static_cast<std::size_t>(-left)], leaves[static_cast<std::size_t>(-right)]};
}

Stage parse_stage(const XmlNode& stage_el) {
    Stage stage;
    const XmlNode& thr = require(stage_el, "stageThreshold");
    const auto v = numbers(thr);
    if (v.size() != 1) fail_at(ParseErrorKind::InvalidValue, thr, "<stageThreshold> must hold one number");
    stage.threshold = v[0];
    const XmlNode& weak = require(stage_el, "weakClassifiers");
    for (const auto& w : weak.children) stage.stumps.push_back(parse_stump(w));
    if (stage.stumps.empty()) fail_at(ParseErrorKind::InvalidValue, weak, "stage has no weak classifiers");
    return stage;
}

HaarFeature parse_feature(const XmlNode& feat_el, const CascadeModel& model) {
    if (const XmlNode* tilted = feat_el.child("tilted"); tilted != nullptr && single_long(*tilted) != 0) {
        fail_at(ParseErrorKind::UnsupportedFormat, *tilted, "tilted (45 degree) features are not supported");
    }
    const XmlNode& rects_el = require(feat_el, "rects");
    HaarFeature feature;
    for (const auto& r : rects_el.children) {
        const auto t = tokens(r.text);
        if (t.size() != 5) fail_at(ParseErrorKind::InvalidValue, r, "rect must be 'x y w h weight'");
        WeightedRect wr;
        wr.rect = Rect{static_cast<int>(to_long(t[0], r)), static_cast<int>(to_long(t[1], r)),
                       static_cast<int>(to_long(t[2], r)), static_cast<int>(to_long(t[3], r))};
        wr.weight = to_double(t[4], r);
        if (!wr.rect.fits_in(model.window_w, model.window_h)) {
            fail_at(ParseErrorKind::RectOutsideWindow, r,
                    "rect " + std::string(r.text) + " leaves the " + std::to_string(model.window_w) + "x" +
                        std::to_string(model.window_h) + " window");
        }
        feature.rects.push_back(wr);
    }
    if (feature.rects.size() < 2 || feature.rects.size() > 3) {
        fail_at(ParseErrorKind::InvalidValue, rects_el, "feature must have 2 or 3 rects");
    }
    return feature;
}

void write_double(std::ostringstream& os, double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    os.write(buf, res.ptr - buf);
}

}  // namespace

std::size_t CascadeModel::stump_count() const {
    std::size_t n = 0;
    for (const auto& s : stages) n += s.stumps.size();
    return n;
}

CascadeModel parse_cascade_xml(std::string_view xml) {
    const XmlNode root = XmlParser(xml).parse_document();

    const XmlNode* cascade = root.name == "cascade" ? &root : root.child("cascade");
    if (cascade == nullptr) {
        for (const auto& c : root.children) {
            if (c.attr("type_id") == "opencv-haar-classifier") {
                fail_at(ParseErrorKind::UnsupportedFormat, c,
                        "old-style cascade format; convert it to the stump-based <cascade> schema");
            }
        }
        fail_at(ParseErrorKind::MissingElement, root, "missing required element <cascade>");
    }
    if (const XmlNode* st = cascade->child("stageType"); st && tokens(st->text) != std::vector<std::string_view>{"BOOST"}) {
        fail_at(ParseErrorKind::UnsupportedFormat, *st, "only BOOST stages are supported");
    }
    if (const XmlNode* ft = cascade->child("featureType"); ft && tokens(ft->text) != std::vector<std::string_view>{"HAAR"}) {
        fail_at(ParseErrorKind::UnsupportedFormat, *ft, "only HAAR features are supported");
    }

    CascadeModel model;
    parse_window(*cascade, model);

    const XmlNode& stages = require(*cascade, "stages");
    for (const auto& s : stages.children) model.stages.push_back(parse_stage(s));
    if (model.stages.empty()) fail_at(ParseErrorKind::InvalidValue, stages, "cascade has no stages");

    const XmlNode& features = require(*cascade, "features");
    for (const auto& f : features.children) model.features.push_back(parse_feature(f, model));

    for (std::size_t si = 0; si < model.stages.size(); ++si) {
        for (const auto& stump : model.stages[si].stumps) {
            if (stump.feature >= model.features.size()) {
                fail_at(ParseErrorKind::InvalidValue, stages.children[si],
                        "stump references feature " + std::to_string(stump.feature) + " but only " +
                            std::to_string(model.features.size()) + " exist");
            }
        }
    }
    return model;
}

CascadeModel load_cascade_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open cascade '" + path + "'");
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_cascade_xml(text);
}

void validate(const CascadeModel& model) {
    if (model.window_w < 4 || model.window_h < 4) throw DataError("cascade window must be at least 4x4");
    if (model.stages.empty()) throw DataError("cascade has no stages");
    for (const auto& f : model.features) {
        if (f.rects.size() < 2 || f.rects.size() > 3) throw DataError("feature must have 2 or 3 rects");
        for (const auto& r : f.rects) {
            if (!r.rect.fits_in(model.window_w, model.window_h)) throw DataError("feature rect leaves the window");
        }
    }
    for (const auto& s : model.stages) {
        if (s.stumps.empty()) throw DataError("stage has no stumps");
        for (const auto& st : s.stumps) {
            if (st.feature >= model.features.size()) throw DataError("stump feature index out of range");
        }
    }
}

std::string to_cascade_xml(const CascadeModel& model) {
    std::ostringstream os;
    os << "<?xml version=\"1.0\"?>\n<opencv_storage>\n<cascade type_id=\"opencv-cascade-classifier\">\n"
       << "  <stageType>BOOST</stageType>\n  <featureType>HAAR</featureType>\n"
       << "  <height>" << model.window_h << "</height>\n  <width>" << model.window_w << "</width>\n"
       << "  <stageNum>" << model.stages.size() << "</stageNum>\n  <stages>\n";
    for (const auto& stage : model.stages) {
        os << "    <_>\n      <maxWeakCount>" << stage.stumps.size() << "</maxWeakCount>\n"
           << "      <stageThreshold>";
        write_double(os, stage.threshold);
        os << "</stageThreshold>\n      <weakClassifiers>\n";
        for (const auto& s : stage.stumps) {
            os << "        <_>\n          <internalNodes>0 -1 " << s.feature << ' ';
            write_double(os, s.threshold);
            os << "</internalNodes>\n          <leafValues>";
            write_double(os, s.left_leaf);
            os << ' ';
            write_double(os, s.right_leaf);
            os << "</leafValues></_>\n";
        }
        os << "      </weakClassifiers></_>\n";
    }
    os << "  </stages>\n  <features>\n";
    for (const auto& f : model.features) {
        os << "    <_>\n      <rects>\n";
        for (const auto& r : f.rects) {
            os << "        <_>" << r.rect.x << ' ' << r.rect.y << ' ' << r.rect.w << ' ' << r.rect.h << ' ';
            write_double(os, r.weight);
            os << "</_>\n";
        }
        os << "      </rects></_>\n";
    }
    os << "  </features></cascade>\n</opencv_storage>\n";
    return os.str();
}

}  // namespace facegate
