#include <doctest.h>

#include <cmath>
#include <random>

#include "failex/error.hpp"
#include "failex/representation.hpp"

using namespace failex;

namespace {

constexpr Minutes kEnd = 20160;
constexpr Minutes kHorizon = 4320;

RepresentationParams random_params(std::uint64_t seed, std::size_t vocabulary = 6, int s = 5, int a = 4) {
    auto p = RepresentationParams::initialize(vocabulary, s, a, seed);
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < p.decay.theta.size(); ++i) {
        p.decay.theta[i] = normal(gen);
        p.decay.sigma_raw[i] = normal(gen);
    }
    return p;
}

EventBag random_bag(std::mt19937_64& gen, int vocabulary) {
    EventBag bag;
    for (int type = 0; type < vocabulary; ++type)
        if (gen() % 2) bag.counts.push_back({type, 1 + static_cast<int>(gen() % 6)});
    if (bag.counts.empty()) bag.counts.push_back({static_cast<int>(gen() % vocabulary), 1});
    bag.tau = static_cast<Minutes>(gen() % kEnd);
    return bag;
}

Vector regrouped(const WindowEncoding& enc, const EmbeddingTable& table) {
    Vector w = Vector::Zero(table.dimension());
    for (const auto& term : enc.terms) w += term.coefficient * table.row(term.type);
    return w;
}

}  // namespace

TEST_CASE("vocabulary lookups") {
    const Vocabulary vocab({"A", "B", "C"});
    CHECK(vocab.size() == 3);
    CHECK(vocab.index_of("B") == 1);
    CHECK_FALSE(vocab.find("Z").has_value());
    CHECK_THROWS_AS(vocab.index_of("Z"), ValidationError);
    CHECK_THROWS_AS(Vocabulary({"A", "A"}), ValidationError);
    CHECK(Vocabulary::from_rules(default_rules()).size() == 15);
}

TEST_CASE("bags merge duplicate events") {
    EventWindow window;
    window.window_id = 1;
    for (const char* type : {"B", "A", "B", "B"}) window.events.push_back({"d", type, 10, 1.0});
    window.tau = 10;
    const auto bag = make_bag(window, Vocabulary({"A", "B"}));
    REQUIRE(bag.counts.size() == 2);
    CHECK(bag.counts[0].type == 0);
    CHECK(bag.counts[0].frequency == 1);
    CHECK(bag.counts[1].frequency == 3);
    CHECK(bag.tau == 10);
}

TEST_CASE("single-type attention is the identity") {
    const auto p = random_params(1);
    const EventBag bag{{{2, 1}}, 100};
    const auto att = attend(bag, p.embeddings, p.projection);
    CHECK(att.alpha.rows() == 1);
    CHECK(att.alpha(0, 0) == doctest::Approx(1.0));
    CHECK((att.context.col(0) - p.embeddings.row(2)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("zero projections give uniform attention") {
    auto p = random_params(2);
    p.projection.query.setZero();
    p.projection.key.setZero();
    const EventBag bag{{{0, 1}, {3, 2}, {4, 7}}, 100};
    const auto att = attend(bag, p.embeddings, p.projection);
    for (Eigen::Index i = 0; i < 3; ++i)
        for (Eigen::Index j = 0; j < 3; ++j) CHECK(att.alpha(i, j) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("attention rows are distributions") {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = random_params(trial + 10);
        const auto bag = random_bag(gen, 6);
        const auto att = attend(bag, p.embeddings, p.projection);
        for (Eigen::Index r = 0; r < att.alpha.rows(); ++r) {
            CHECK(std::abs(att.alpha.row(r).sum() - 1.0) < 1e-12);
            CHECK(att.alpha.row(r).minCoeff() >= 0.0);
            CHECK(att.alpha.row(r).maxCoeff() <= 1.0);
        }
    }
}

TEST_CASE("decay cases") {
    DecayParams decay{Vector::Zero(2), Vector::Constant(2, -800.0)};
    CHECK(decay.sigma(0) == 0.0);
    CHECK(contribution(0, 0.0, decay) == 0.5);
    CHECK(contribution(0, 9000.0, decay) == 0.5);

    decay.sigma_raw[1] = softplus_inverse(1.0);
    decay.theta[1] = 2.0;
    CHECK(decay.sigma(1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(contribution(1, 2.0 * kMinutesPerDay, decay) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(contribution(1, 60.0, decay) > contribution(1, 600.0, decay));
}

TEST_CASE("decay stays in the open unit interval and decreases with age") {
    std::mt19937_64 gen(4);
    std::normal_distribution<double> normal(0.0, 2.0);
    std::uniform_real_distribution<double> age(0.0, 17.0 * kMinutesPerDay);
    for (int trial = 0; trial < 1000; ++trial) {
        const DecayParams decay{Vector::Constant(1, normal(gen)), Vector::Constant(1, normal(gen))};
        double d1 = age(gen), d2 = age(gen);
        if (d1 > d2) std::swap(d1, d2);
        if (d2 - d1 < 1.0) d2 = d1 + 1.0;
        const double i1 = contribution(0, d1, decay), i2 = contribution(0, d2, decay);
        CHECK(i1 > 0.0);
        CHECK(i1 < 1.0);
        CHECK(i1 > i2);
    }
}

TEST_CASE("plain encoding is a frequency weighted sum") {
    const auto p = random_params(5);
    const auto& table = p.embeddings;
    CHECK((encode_window_plain({{{1, 1}}, 0}, table) - table.row(1)).norm() == 0.0);
    CHECK((encode_window_plain({{{1, 5}}, 0}, table) - 5.0 * table.row(1)).norm() < 1e-15);
    const Vector two = encode_window_plain({{{0, 2}, {3, 3}}, 0}, table);
    CHECK((two - (2.0 * table.row(0) + 3.0 * table.row(3))).norm() < 1e-14);
}

TEST_CASE("single-type attentive encoding is the decayed embedding") {
    const auto p = random_params(6);
    const EventBag bag{{{4, 1}}, 10000};
    const auto enc = encode_window_attentive(bag, kEnd, kHorizon, p);
    const double I = contribution(4, static_cast<double>(kEnd + kHorizon - 10000), p.decay);
    REQUIRE(enc.terms.size() == 1);
    CHECK(enc.terms[0].coefficient == doctest::Approx(I).epsilon(1e-14));
    CHECK(enc.terms[0].contribution == doctest::Approx(I).epsilon(1e-14));
    CHECK((enc.w - I * p.embeddings.row(4)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(enc.delta_minutes == kEnd + kHorizon - 10000);
}

TEST_CASE("window after the observation end is rejected") {
    const auto p = random_params(7);
    CHECK_THROWS_AS(encode_window_attentive({{{0, 1}}, kEnd + 1}, kEnd, kHorizon, p), ValidationError);
}

TEST_CASE("regrouped coefficients reproduce the encoding") {
    std::mt19937_64 gen(8);
    double worst = 0.0;
    for (int trial = 0; trial < 300; ++trial) {
        const auto p = random_params(100 + trial);
        const auto bag = random_bag(gen, 6);
        const auto enc = encode_window_attentive(bag, kEnd, kHorizon, p);
        worst = std::max(worst, (enc.w - regrouped(enc, p.embeddings)).cwiseAbs().maxCoeff());
        for (const auto& term : enc.terms) CHECK(term.coefficient >= 0.0);
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("doubling frequencies doubles the encoding") {
    std::mt19937_64 gen(9);
    for (int trial = 0; trial < 100; ++trial) {
        const auto p = random_params(200 + trial);
        auto bag = random_bag(gen, 6);
        auto doubled = bag;
        for (auto& c : doubled.counts) c.frequency *= 2;
        CHECK((encode_window_plain(doubled, p.embeddings) - 2.0 * encode_window_plain(bag, p.embeddings))
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
        const Vector a = encode_window_attentive(bag, kEnd, kHorizon, p).w;
        const Vector b = encode_window_attentive(doubled, kEnd, kHorizon, p).w;
        CHECK((b - 2.0 * a).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("event order inside a window does not matter") {
    const auto vocab = Vocabulary({"A", "B", "C", "D", "E", "F"});
    const auto p = random_params(11);
    std::mt19937_64 gen(12);
    for (int trial = 0; trial < 50; ++trial) {
        EventWindow window;
        for (int i = 0; i < 12; ++i)
            window.events.push_back({"d", vocab.name(gen() % 6), static_cast<Minutes>(1000 + i), 1.0});
        window.tau = 1011;
        auto shuffled = window;
        std::shuffle(shuffled.events.begin(), shuffled.events.end(), gen);
        const auto a = encode_window_attentive(make_bag(window, vocab), kEnd, kHorizon, p).w;
        const auto b = encode_window_attentive(make_bag(shuffled, vocab), kEnd, kHorizon, p).w;
        CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("older windows receive smaller coefficients") {
    auto p = random_params(13);
    p.decay.sigma_raw.setConstant(softplus_inverse(0.7));
    const EventBag recent{{{0, 2}, {2, 1}, {5, 4}}, 15000};
    EventBag older = recent;
    older.tau -= 5 * kMinutesPerDay;
    const auto a = encode_window_attentive(recent, kEnd, kHorizon, p);
    const auto b = encode_window_attentive(older, kEnd, kHorizon, p);
    CHECK(b.w.norm() < a.w.norm());
    for (std::size_t i = 0; i < a.terms.size(); ++i) CHECK(std::abs(b.terms[i].coefficient) < std::abs(a.terms[i].coefficient));
}

TEST_CASE("initialization follows the documented ranges") {
    const auto p = RepresentationParams::initialize(15, 16, 16, 42);
    CHECK(p.embeddings.vectors.rows() == 15);
    CHECK(p.embeddings.vectors.cols() == 16);
    CHECK(p.embeddings.vectors.cwiseAbs().maxCoeff() <= 0.25);
    CHECK(p.projection.query.cwiseAbs().maxCoeff() <= 0.25);
    CHECK(p.decay.theta.cwiseAbs().maxCoeff() == 0.0);
    CHECK(p.decay.sigma(3) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(softplus_inverse(0.5) == doctest::Approx(-0.43275213).epsilon(1e-8));
    const auto q = RepresentationParams::initialize(15, 16, 16, 42);
    CHECK(p.embeddings.vectors == q.embeddings.vectors);
}

TEST_CASE("encoder names") {
    CHECK(parse_encoder_kind("plain") == EncoderKind::plain);
    CHECK(to_string(EncoderKind::attentive) == "attentive");
    CHECK_THROWS_AS(parse_encoder_kind("gru"), ValidationError);
}
