#include "vecspace/toy_world.hpp"

#include "vecspace/rng.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <stdexcept>

namespace vecspace {

namespace {

constexpr std::array<std::string_view, 3> kShapeNames{"circle", "square", "triangle"};
constexpr std::array<std::string_view, 6> kColorNames{"red",    "green",   "blue",
                                                      "yellow", "magenta", "cyan"};
constexpr std::array<std::string_view, 4> kRelationNames{"left-of", "right-of", "above", "below"};

const std::vector<std::string> kToyContent{
    "a",     "there", "is",    "picture", "of",    "the",    "image", "shows", "with",
    "on",    "dark",  "background", "and", "left", "right",  "above", "below", "red",
    "green", "blue",  "yellow", "magenta", "cyan", "circle", "square", "triangle"};

const std::array<std::string, 4> kSpecialTokens{"<pad>", "<bos>", "<eos>", "<unk>"};

// A template is a token pattern over literals and slots. {x} {r} {y} form the
// surface relation R(X, Y); {z} is an object outside the relation. `inverse`
// only affects realisation: the scene's relation is voiced with swapped
// operands and the inverse relation word.
struct Template {
    std::vector<std::string> pattern;
    bool inverse = false;
};

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!current.empty()) out.push_back(std::move(current)), current.clear();
        } else {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

std::vector<Template> build_templates(std::size_t arity) {
    static const std::array<std::string_view, 4> prefixes{"", "there is", "a picture of",
                                                          "the image shows"};
    std::vector<Template> out;
    auto make = [](std::string_view prefix, std::string_view body, bool inverse) {
        std::string text{prefix};
        text += ' ';
        text += body;
        return Template{split_words(text), inverse};
    };
    switch (arity) {
    case 1:
        for (auto p : prefixes) out.push_back(make(p, "{x}", false));
        out.push_back(make("a picture with", "{x}", false));
        out.push_back(make("", "{x} on a dark background", false));
        break;
    case 2:
        for (auto p : prefixes) {
            out.push_back(make(p, "{x} {r} {y}", false));
            out.push_back(make(p, "{x} {r} {y}", true));
        }
        break;
    case 3:
        for (auto p : prefixes) {
            out.push_back(make(p, "{x} {r} {y} and {z}", false));
            out.push_back(make(p, "{z} and {x} {r} {y}", true));
        }
        break;
    default:
        break;
    }
    return out;
}

const std::vector<Template>& templates(std::size_t arity) {
    static const std::array<std::vector<Template>, 4> all{
        std::vector<Template>{}, build_templates(1), build_templates(2), build_templates(3)};
    if (arity == 0 || arity > 3) throw std::invalid_argument("scene arity must be 1..3");
    return all[arity];
}

std::vector<std::string> relation_words(Relation r) {
    switch (r) {
    case Relation::LeftOf: return {"left", "of"};
    case Relation::RightOf: return {"right", "of"};
    case Relation::Above: return {"above"};
    case Relation::Below: return {"below"};
    }
    return {};
}

void append_object(std::vector<std::string>& out, const SceneObject& o) {
    out.emplace_back("a");
    out.emplace_back(to_string(o.color));
    out.emplace_back(to_string(o.shape));
}

bool consistent(Relation r, Cell a, Cell b) {
    switch (r) {
    case Relation::LeftOf: return a.col < b.col;
    case Relation::RightOf: return a.col > b.col;
    case Relation::Above: return a.row < b.row;
    case Relation::Below: return a.row > b.row;
    }
    return false;
}

// Pattern matcher. Returns false as soon as the token stream diverges.
struct ParseSlots {
    std::optional<ObjectKind> x, y, z;
    std::optional<Relation> r;
};

bool match_object(const std::vector<std::string>& words, std::size_t& pos, ObjectKind& out) {
    if (pos + 3 > words.size() || words[pos] != "a") return false;
    auto color = color_from_string(words[pos + 1]);
    auto shape = shape_from_string(words[pos + 2]);
    if (!color || !shape) return false;
    out = ObjectKind{*shape, *color};
    pos += 3;
    return true;
}

bool match_relation(const std::vector<std::string>& words, std::size_t& pos, Relation& out) {
    for (Relation r : kRelations) {
        auto phrase = relation_words(r);
        if (pos + phrase.size() > words.size()) continue;
        if (std::equal(phrase.begin(), phrase.end(), words.begin() + static_cast<std::ptrdiff_t>(pos))) {
            out = r;
            pos += phrase.size();
            return true;
        }
    }
    return false;
}

std::optional<ParseSlots> match(const Template& t, const std::vector<std::string>& words) {
    ParseSlots slots;
    std::size_t pos = 0;
    for (const auto& piece : t.pattern) {
        if (piece == "{x}" || piece == "{y}" || piece == "{z}") {
            ObjectKind kind;
            if (!match_object(words, pos, kind)) return std::nullopt;
            (piece == "{x}" ? slots.x : piece == "{y}" ? slots.y : slots.z) = kind;
        } else if (piece == "{r}") {
            Relation r;
            if (!match_relation(words, pos, r)) return std::nullopt;
            slots.r = r;
        } else {
            if (pos >= words.size() || words[pos] != piece) return std::nullopt;
            ++pos;
        }
    }
    if (pos != words.size()) return std::nullopt;
    return slots;
}

} // namespace

std::string_view to_string(Shape s) { return kShapeNames[static_cast<std::size_t>(s)]; }
std::string_view to_string(Color c) { return kColorNames[static_cast<std::size_t>(c)]; }
std::string_view to_string(Relation r) { return kRelationNames[static_cast<std::size_t>(r)]; }

std::optional<Shape> shape_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kShapeNames.size(); ++i)
        if (kShapeNames[i] == s) return static_cast<Shape>(i);
    return std::nullopt;
}

std::optional<Color> color_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kColorNames.size(); ++i)
        if (kColorNames[i] == s) return static_cast<Color>(i);
    return std::nullopt;
}

std::optional<Relation> relation_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kRelationNames.size(); ++i)
        if (kRelationNames[i] == s) return static_cast<Relation>(i);
    return std::nullopt;
}

Relation inverse(Relation r) {
    switch (r) {
    case Relation::LeftOf: return Relation::RightOf;
    case Relation::RightOf: return Relation::LeftOf;
    case Relation::Above: return Relation::Below;
    case Relation::Below: return Relation::Above;
    }
    return r;
}

std::array<double, 3> rgb(Color c) {
    switch (c) {
    case Color::Red: return {1.0, 0.0, 0.0};
    case Color::Green: return {0.0, 1.0, 0.0};
    case Color::Blue: return {0.0, 0.0, 1.0};
    case Color::Yellow: return {1.0, 1.0, 0.0};
    case Color::Magenta: return {1.0, 0.0, 1.0};
    case Color::Cyan: return {0.0, 1.0, 1.0};
    }
    return {0.0, 0.0, 0.0};
}

void validate(const Scene& scene) {
    if (scene.objects.empty() || scene.objects.size() > kMaxObjects)
        throw std::invalid_argument("scene must hold 1..3 objects");
    if (scene.canvas_size < kGridSize * 3)
        throw std::invalid_argument("canvas too small for the grid");
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const auto& o = scene.objects[i];
        if (o.cell.row < 0 || o.cell.row >= kGridSize || o.cell.col < 0 || o.cell.col >= kGridSize)
            throw std::invalid_argument("object cell outside grid");
        for (std::size_t j = 0; j < i; ++j)
            if (scene.objects[j].cell == o.cell)
                throw std::invalid_argument("two objects share a cell");
    }
    if (scene.relation) {
        if (scene.objects.size() < 2) throw std::invalid_argument("relation needs two objects");
        if (!consistent(*scene.relation, scene.objects[0].cell, scene.objects[1].cell))
            throw std::invalid_argument("relation inconsistent with object cells");
    }
}

std::pair<int, int> cell_span(int index, int canvas_size) {
    return {index * canvas_size / kGridSize, (index + 1) * canvas_size / kGridSize};
}

Caption strip_framing(const Caption& caption) {
    Caption out;
    out.ids.reserve(caption.ids.size());
    for (TokenId id : caption.ids)
        if (id != kPad && id != kBos && id != kEos) out.ids.push_back(id);
    return out;
}

Vocabulary::Vocabulary(std::vector<std::string> content) {
    tokens_.assign(kSpecialTokens.begin(), kSpecialTokens.end());
    for (auto& t : content) tokens_.push_back(std::move(t));
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
        if (!inserted) throw std::invalid_argument("duplicate vocabulary token: " + tokens_[i]);
    }
}

const Vocabulary& Vocabulary::toy() {
    static const Vocabulary vocab{kToyContent};
    return vocab;
}

const std::string& Vocabulary::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw std::out_of_range("token id out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::id(std::string_view token) const {
    auto it = index_.find(std::string{token});
    return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
    return index_.contains(std::string{token});
}

std::uint64_t Vocabulary::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& t : tokens_) {
        for (unsigned char ch : t) {
            h ^= ch;
            h *= 0x100000001b3ull;
        }
        h ^= static_cast<unsigned char>('\n');
        h *= 0x100000001b3ull;
    }
    return h;
}

Caption Vocabulary::encode(std::string_view sentence) const {
    Caption out;
    for (const auto& w : split_words(sentence)) out.ids.push_back(id(w));
    return out;
}

std::string Vocabulary::decode(const Caption& caption, bool keep_framing) const {
    std::string out;
    for (TokenId id : caption.ids) {
        if (!keep_framing && (id == kPad || id == kBos || id == kEos)) continue;
        if (!out.empty()) out += ' ';
        out += token(id);
    }
    return out;
}

RelationFact canonical_fact(ObjectKind a, Relation r, ObjectKind b) {
    switch (r) {
    case Relation::RightOf: return {b, Relation::LeftOf, a};
    case Relation::Below: return {b, Relation::Above, a};
    default: return {a, r, b};
    }
}

Semantics semantics_of(const Scene& scene) {
    Semantics s;
    std::size_t first_loose = 0;
    if (scene.relation && scene.objects.size() >= 2) {
        const auto& a = scene.objects[0];
        const auto& b = scene.objects[1];
        s.relation = canonical_fact({a.shape, a.color}, *scene.relation, {b.shape, b.color});
        first_loose = 2;
    }
    for (std::size_t i = first_loose; i < scene.objects.size(); ++i)
        s.loose.push_back({scene.objects[i].shape, scene.objects[i].color});
    std::sort(s.loose.begin(), s.loose.end());
    return s;
}

std::string describe(const Semantics& semantics) {
    std::ostringstream os;
    auto obj = [&](const ObjectKind& k) { os << to_string(k.color) << ' ' << to_string(k.shape); };
    if (semantics.relation) {
        obj(semantics.relation->first);
        os << ' ' << to_string(semantics.relation->relation) << ' ';
        obj(semantics.relation->second);
    }
    for (const auto& k : semantics.loose) {
        if (os.tellp() > 0) os << " + ";
        obj(k);
    }
    return os.str();
}

Scene sample_scene(std::uint64_t seed, int canvas_size) {
    Rng rng(seed);
    Scene scene;
    scene.canvas_size = canvas_size;
    const auto count = static_cast<std::size_t>(1 + rng.below(3));
    auto random_object = [&](Cell cell) {
        SceneObject o;
        o.shape = kShapes[rng.below(kShapes.size())];
        o.color = kColors[rng.below(kColors.size())];
        o.cell = cell;
        return o;
    };

    if (count == 1) {
        const int index = static_cast<int>(rng.below(kGridSize * kGridSize));
        scene.objects.push_back(random_object({index / kGridSize, index % kGridSize}));
        return scene;
    }

    // The related pair shares a row (left/right) or a column (above/below) so
    // that exactly one of the four relations holds between them.
    const Relation rel = kRelations[rng.below(kRelations.size())];
    const bool horizontal = rel == Relation::LeftOf || rel == Relation::RightOf;
    const int line = static_cast<int>(rng.below(kGridSize));
    int lo = static_cast<int>(rng.below(kGridSize));
    int hi = static_cast<int>(rng.below(kGridSize - 1));
    if (hi >= lo) ++hi;
    if (lo > hi) std::swap(lo, hi);
    const bool first_is_lower = rel == Relation::LeftOf || rel == Relation::Above;
    const int p0 = first_is_lower ? lo : hi;
    const int p1 = first_is_lower ? hi : lo;
    const Cell c0 = horizontal ? Cell{line, p0} : Cell{p0, line};
    const Cell c1 = horizontal ? Cell{line, p1} : Cell{p1, line};
    scene.objects.push_back(random_object(c0));
    scene.objects.push_back(random_object(c1));
    scene.relation = rel;

    if (count == 3) {
        // The third object avoids the pair's row/column and both of their
        // perpendicular lines, so it stands in no grid relation with them.
        const int free_pos = 3 - lo - hi;
        int other_line = static_cast<int>(rng.below(kGridSize - 1));
        if (other_line >= line) ++other_line;
        const Cell c2 = horizontal ? Cell{other_line, free_pos} : Cell{free_pos, other_line};
        scene.objects.push_back(random_object(c2));
    }
    return scene;
}

ImageTensor render_scene(const Scene& scene) {
    validate(scene);
    const int n = scene.canvas_size;
    ImageTensor img(kChannels, n, n, kBackground);
    constexpr int margin = 1;
    for (const auto& o : scene.objects) {
        const auto [y0, y1] = cell_span(o.cell.row, n);
        const auto [x0, x1] = cell_span(o.cell.col, n);
        const double top = y0 + margin, bottom = y1 - margin;
        const double left = x0 + margin, right = x1 - margin;
        const double cx = 0.5 * (left + right), cy = 0.5 * (top + bottom);
        const double radius = 0.5 * std::min(right - left, bottom - top);
        const double half_width = 0.5 * (right - left);
        const auto color = rgb(o.color);
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                const double px = x + 0.5, py = y + 0.5;
                bool inside = false;
                switch (o.shape) {
                case Shape::Square:
                    inside = px > left && px < right && py > top && py < bottom;
                    break;
                case Shape::Circle:
                    inside = (px - cx) * (px - cx) + (py - cy) * (py - cy) <= radius * radius;
                    break;
                case Shape::Triangle: {
                    const double t = (py - top) / (bottom - top);
                    inside = t >= 0.0 && t <= 1.0 && std::abs(px - cx) <= t * half_width;
                    break;
                }
                }
                if (inside)
                    for (int c = 0; c < kChannels; ++c) img.at(c, y, x) = color[static_cast<std::size_t>(c)];
            }
        }
    }
    return img;
}

std::size_t template_count(std::size_t arity) { return templates(arity).size(); }

Caption realize_template(const Scene& scene, std::size_t template_index, const Vocabulary& vocab) {
    validate(scene);
    const auto& ts = templates(scene.objects.size());
    if (template_index >= ts.size()) throw std::out_of_range("template index out of range");
    const Template& t = ts[template_index];
    const auto& objs = scene.objects;
    const bool related = scene.relation.has_value();
    if (objs.size() >= 2 && !related)
        throw std::invalid_argument("multi-object scenes must carry a relation to be described");

    std::vector<std::string> words;
    for (const auto& piece : t.pattern) {
        if (piece == "{x}") {
            append_object(words, t.inverse ? objs[1] : objs[0]);
        } else if (piece == "{y}") {
            append_object(words, t.inverse ? objs[0] : objs[1]);
        } else if (piece == "{z}") {
            append_object(words, objs[2]);
        } else if (piece == "{r}") {
            const Relation r = t.inverse ? inverse(*scene.relation) : *scene.relation;
            for (auto& w : relation_words(r)) words.push_back(std::move(w));
        } else {
            words.push_back(piece);
        }
    }
    Caption out;
    out.ids.reserve(words.size());
    for (const auto& w : words) out.ids.push_back(vocab.id(w));
    return out;
}

std::vector<Caption> describe_scene(const Scene& scene, std::size_t k, std::uint64_t seed,
                                    const Vocabulary& vocab) {
    validate(scene);
    const std::size_t available = template_count(scene.objects.size());
    if (k == 0) throw std::invalid_argument("k must be at least 1");
    if (k > available)
        throw std::invalid_argument("k=" + std::to_string(k) + " exceeds the " +
                                    std::to_string(available) + " templates for this scene");
    std::vector<std::size_t> order(available);
    for (std::size_t i = 0; i < available; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<Caption> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(realize_template(scene, order[i], vocab));
    return out;
}

std::optional<Semantics> parse_caption(const Caption& caption, const Vocabulary& vocab) {
    const Caption content = strip_framing(caption);
    std::vector<std::string> words;
    words.reserve(content.ids.size());
    for (TokenId id : content.ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab.size() || id == kUnk) return std::nullopt;
        words.push_back(vocab.token(id));
    }
    for (std::size_t arity = 1; arity <= kMaxObjects; ++arity) {
        for (const auto& t : templates(arity)) {
            auto slots = match(t, words);
            if (!slots) continue;
            Semantics s;
            if (slots->r) {
                s.relation = canonical_fact(*slots->x, *slots->r, *slots->y);
                if (slots->z) s.loose.push_back(*slots->z);
            } else {
                s.loose.push_back(*slots->x);
            }
            return s;
        }
    }
    return std::nullopt;
}

} // namespace vecspace
