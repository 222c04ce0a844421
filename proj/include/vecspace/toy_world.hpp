#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vecspace {

enum class Shape : std::uint8_t { Circle, Square, Triangle };
enum class Color : std::uint8_t { Red, Green, Blue, Yellow, Magenta, Cyan };
// Relation of object 0 with respect to object 1.
enum class Relation : std::uint8_t { LeftOf, RightOf, Above, Below };

inline constexpr std::array kShapes{Shape::Circle, Shape::Square, Shape::Triangle};
inline constexpr std::array kColors{Color::Red,    Color::Green,   Color::Blue,
                                    Color::Yellow, Color::Magenta, Color::Cyan};
inline constexpr std::array kRelations{Relation::LeftOf, Relation::RightOf, Relation::Above,
                                       Relation::Below};

inline constexpr int kGridSize = 3;
inline constexpr int kDefaultCanvas = 32;
inline constexpr int kChannels = 3;
inline constexpr double kBackground = 0.1;
inline constexpr std::size_t kMaxObjects = 3;

std::string_view to_string(Shape s);
std::string_view to_string(Color c);
std::string_view to_string(Relation r);  // "left-of", "right-of", "above", "below"
std::optional<Shape> shape_from_string(std::string_view s);
std::optional<Color> color_from_string(std::string_view s);
std::optional<Relation> relation_from_string(std::string_view s);
Relation inverse(Relation r);
std::array<double, 3> rgb(Color c);

struct Cell {
    int row = 0;
    int col = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
};

struct SceneObject {
    Shape shape = Shape::Circle;
    Color color = Color::Red;
    Cell cell;
    friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct Scene {
    std::vector<SceneObject> objects;
    std::optional<Relation> relation;  // between objects[0] and objects[1]
    int canvas_size = kDefaultCanvas;
    friend bool operator==(const Scene&, const Scene&) = default;
};

// Throws std::invalid_argument describing the first violated invariant.
void validate(const Scene& scene);

// Pixel range [begin, end) covered by grid index `index` on a canvas.
std::pair<int, int> cell_span(int index, int canvas_size);

/// C x H x W image, channel-major, values in [0, 1].
class ImageTensor {
public:
    ImageTensor() = default;
    ImageTensor(int channels, int height, int width, double fill = 0.0)
        : channels_(channels), height_(height), width_(width),
          data_(static_cast<std::size_t>(channels) * height * width, fill) {}

    int channels() const { return channels_; }
    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return data_.size(); }

    double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
    double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

private:
    std::size_t index(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
    }

    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

using TokenId = std::int32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kNumSpecials = 4;

struct Caption {
    std::vector<TokenId> ids;
    friend bool operator==(const Caption&, const Caption&) = default;
    friend auto operator<=>(const Caption&, const Caption&) = default;
};

// Drops PAD/BOS/EOS framing tokens; UNK is kept.
Caption strip_framing(const Caption& caption);

class Vocabulary {
public:
    Vocabulary() = default;
    // `content` excludes the four specials, which always occupy ids 0..3.
    explicit Vocabulary(std::vector<std::string> content);

    // The closed vocabulary of the toy caption grammar.
    static const Vocabulary& toy();

    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::string& token(TokenId id) const;
    TokenId id(std::string_view token) const;  // UNK when absent
    bool contains(std::string_view token) const;
    // FNV-1a over the newline-joined token list.
    std::uint64_t hash() const;

    Caption encode(std::string_view sentence) const;  // lowercases, splits on whitespace
    std::string decode(const Caption& caption, bool keep_framing = false) const;

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

struct ObjectKind {
    Shape shape = Shape::Circle;
    Color color = Color::Red;
    friend bool operator==(const ObjectKind&, const ObjectKind&) = default;
    friend auto operator<=>(const ObjectKind&, const ObjectKind&) = default;
};

// Relations are canonicalized to LeftOf / Above (inverse forms swap operands).
struct RelationFact {
    ObjectKind first;
    Relation relation = Relation::LeftOf;
    ObjectKind second;
    friend bool operator==(const RelationFact&, const RelationFact&) = default;
};

struct Semantics {
    std::optional<RelationFact> relation;
    std::vector<ObjectKind> loose;  // objects outside the relation, sorted
    friend bool operator==(const Semantics&, const Semantics&) = default;
};

RelationFact canonical_fact(ObjectKind a, Relation r, ObjectKind b);
Semantics semantics_of(const Scene& scene);
std::string describe(const Semantics& semantics);

Scene sample_scene(std::uint64_t seed, int canvas_size = kDefaultCanvas);
ImageTensor render_scene(const Scene& scene);

// Number of caption templates available for a scene with `arity` objects.
std::size_t template_count(std::size_t arity);
// Surface realisation of a single template.
Caption realize_template(const Scene& scene, std::size_t template_index,
                         const Vocabulary& vocab = Vocabulary::toy());
// k distinct paraphrases; throws std::invalid_argument if k is 0 or exceeds
// the template count for the scene's arity.
std::vector<Caption> describe_scene(const Scene& scene, std::size_t k, std::uint64_t seed,
                                    const Vocabulary& vocab = Vocabulary::toy());
// Inverse of the caption grammar. nullopt signals a parse failure.
std::optional<Semantics> parse_caption(const Caption& caption,
                                       const Vocabulary& vocab = Vocabulary::toy());

} // namespace vecspace
