#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "clipsplat/errors.hpp"
#include "clipsplat/splat/camera.hpp"
#include "clipsplat/splat/checkpoint.hpp"
#include "clipsplat/splat/covariance.hpp"
#include "clipsplat/splat/interpolate.hpp"
#include "random_models.hpp"

using namespace clipsplat;
using namespace clipsplat::splat;

namespace {

std::array<double, 4> quat_of(const Eigen::Quaterniond& q) { return {q.w(), q.x(), q.y(), q.z()}; }

}  // namespace

TEST(Covariance, IdentityQuaternionUnitScales) {
    const auto s = covariance<double>({1, 0, 0, 0}, {1, 1, 1});
    EXPECT_TRUE(s.isApprox(Eigen::Matrix3d::Identity(), 1e-15));
}

TEST(Covariance, AxisAlignedSquares) {
    const auto s = covariance<double>({1, 0, 0, 0}, {2, 1, 1});
    EXPECT_TRUE(s.isApprox(Eigen::Vector3d(4, 1, 1).asDiagonal().toDenseMatrix(), 1e-15));
}

TEST(Covariance, QuarterTurnAboutZSwapsAxes) {
    const Eigen::Matrix3d r = Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    const Eigen::Matrix3d expected = r * Eigen::Vector3d(4, 1, 1).asDiagonal() * r.transpose();
    const auto s = covariance<double>(quat_of(Eigen::Quaterniond(r)), {2, 1, 1});
    EXPECT_LT((s - expected).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(s(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(s(1, 1), 4.0, 1e-12);
    EXPECT_NEAR(s(2, 2), 1.0, 1e-12);
}

TEST(Covariance, RejectsNonFiniteAndNonPositive) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(covariance<double>({nan, 0, 0, 0}, {1, 1, 1}), InvalidParameterError);
    EXPECT_THROW(covariance<double>({1, 0, 0, 0}, {1, nan, 1}), InvalidParameterError);
    EXPECT_THROW(covariance<double>({1, 0, 0, 0}, {1, 0, 1}), InvalidParameterError);
    EXPECT_THROW(covariance<double>({0, 0, 0, 0}, {1, 1, 1}), InvalidParameterError);
}

TEST(Covariance, RandomPropertiesHold) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> u(0.05, 5.0);
    for (int trial = 0; trial < 200; ++trial) {
        Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
        q.normalize();
        const std::array<double, 3> scale = {u(rng), u(rng), u(rng)};
        const auto s = covariance<double>(quat_of(q), scale);
        const auto flipped = covariance<double>(quat_of(Eigen::Quaterniond(-q.coeffs())), scale);
        EXPECT_LT((s - flipped).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_EQ(s, s.transpose());

        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(s);
        std::array<double, 3> sq = {scale[0] * scale[0], scale[1] * scale[1], scale[2] * scale[2]};
        std::sort(sq.begin(), sq.end());
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(eig.eigenvalues()[k], sq[k], 1e-9 * sq[2]);
        EXPECT_GT(eig.eigenvalues()[0], 0.0);

        const double smax = *std::max_element(scale.begin(), scale.end());
        const double smin = *std::min_element(scale.begin(), scale.end());
        const double cond = eig.eigenvalues()[2] / eig.eigenvalues()[0];
        EXPECT_LE(cond, (smax / smin) * (smax / smin) * (1 + 1e-6));
    }
}

TEST(Camera, FocalFromFieldOfView) {
    const auto cam = camera_from_fov(M_PI / 2, 800, 800, Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero());
    EXPECT_NEAR(cam.fx, 400.0, 1e-9);
    EXPECT_NEAR(cam.fy, 400.0, 1e-9);
}

TEST(Camera, ValidateRejectsBadIntrinsicsAndPose) {
    auto cam = clipsplat::testing::test_camera();
    EXPECT_NO_THROW(cam.validate());
    auto zero_focal = cam;
    zero_focal.fx = 0;
    EXPECT_THROW(zero_focal.validate(), InvalidCameraError);
    auto skewed = cam;
    skewed.rotation(0, 1) = 0.1;
    EXPECT_THROW(skewed.validate(), InvalidCameraError);
    auto empty = cam;
    empty.width = 0;
    EXPECT_THROW(empty.validate(), InvalidCameraError);
}

class InterpolateTest : public ::testing::TestWithParam<Modality> {};

TEST_P(InterpolateTest, EndpointsAreBitExact) {
    const auto a = clipsplat::testing::random_model<float>(GetParam(), 40, 1);
    const auto b = clipsplat::testing::random_model<float>(GetParam(), 40, 2);
    const auto at0 = interpolate(a, b, 0.0);
    const auto at1 = interpolate(a, b, 1.0);
    for (auto g : a.groups()) {
        EXPECT_TRUE(bit_equal(at0.group(g), a.group(g))) << to_string(g);
        EXPECT_TRUE(bit_equal(at1.group(g), b.group(g))) << to_string(g);
    }
}

TEST_P(InterpolateTest, FixedPointAndCount) {
    auto a = clipsplat::testing::random_model<float>(GetParam(), 25, 3);
    normalize_rotations(a);
    for (double t : {0.0, 0.1, 0.37, 0.5, 0.9, 1.0}) {
        const auto m = interpolate(a, a, t);
        EXPECT_EQ(m.size(), a.size());
        for (auto g : a.groups()) {
            const auto& x = m.group(g);
            const auto& y = a.group(g);
            for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(x[k], y[k], 1e-6) << to_string(g);
        }
    }
}

TEST_P(InterpolateTest, ResultIsValidWithUnitQuaternions) {
    const auto a = clipsplat::testing::random_model<float>(GetParam(), 30, 4);
    const auto b = clipsplat::testing::random_model<float>(GetParam(), 30, 5);
    for (double t : {0.25, 0.5, 0.75}) {
        const auto m = interpolate(a, b, t);
        EXPECT_NO_THROW(validate(m));
        for (std::size_t i = 0; i < m.size(); ++i) {
            double n2 = 0;
            for (int c = 0; c < 4; ++c) n2 += double(m.rotations[4 * i + c]) * m.rotations[4 * i + c];
            EXPECT_NEAR(std::sqrt(n2), 1.0, 1e-6);
        }
    }
}

INSTANTIATE_TEST_SUITE_P(AllModalities, InterpolateTest,
                         ::testing::Values(Modality::Image2D, Modality::Video, Modality::Scene3D));

TEST(Interpolate, MeansMidpoint) {
    auto a = GaussianSet::zeros(Modality::Scene3D, 1);
    auto b = GaussianSet::zeros(Modality::Scene3D, 1);
    b.means = {2, 4, 6};
    const auto m = interpolate(a, b, 0.5);
    EXPECT_EQ(m.means, (std::vector<float>{1, 2, 3}));
}

TEST(Interpolate, OppositeHemisphereQuaternionsBlendToSameRotation) {
    auto a = GaussianSet::zeros(Modality::Scene3D, 1);
    auto b = a;
    b.rotations = {-1, 0, 0, 0};
    const auto m = interpolate(a, b, 0.5);
    EXPECT_FLOAT_EQ(m.rotations[0], 1.f);
}

TEST(Interpolate, RejectsMismatchAndBadWeight) {
    const auto a = GaussianSet::zeros(Modality::Image2D, 3);
    EXPECT_THROW(interpolate(a, GaussianSet::zeros(Modality::Image2D, 4), 0.5), IncompatibleModelsError);
    EXPECT_THROW(interpolate(a, GaussianSet::zeros(Modality::Video, 3), 0.5), IncompatibleModelsError);
    EXPECT_THROW(interpolate(a, a, 1.5), DomainError);
    EXPECT_THROW(interpolate(a, a, -0.1), DomainError);
}

TEST(GaussianSet, ValidateCatchesViolations) {
    auto m = clipsplat::testing::random_model<float>(Modality::Image2D, 5, 9);
    EXPECT_NO_THROW(validate(m));
    auto unflat = m;
    unflat.log_scales[0] = 0.f;
    EXPECT_THROW(validate(unflat), ValidationError);
    auto zero_q = m;
    std::fill_n(zero_q.rotations.begin(), 4, 0.f);
    EXPECT_THROW(validate(zero_q), ValidationError);
    auto short_array = m;
    short_array.sh.pop_back();
    EXPECT_THROW(validate(short_array), ValidationError);
    auto high_degree = GaussianSet::zeros(Modality::Video, 2, 1);
    EXPECT_THROW(validate(high_degree), ValidationError);
}

TEST(GaussianSet, GroupsPerModality) {
    EXPECT_EQ(GaussianSet::zeros(Modality::Image2D, 1).groups().size(), 5u);
    EXPECT_EQ(GaussianSet::zeros(Modality::Scene3D, 1).groups().size(), 5u);
    EXPECT_EQ(GaussianSet::zeros(Modality::Video, 1).groups().size(), 8u);
    EXPECT_EQ(group_width(ParamGroup::Colors, Modality::Scene3D, 3), 48u);
}

namespace {

Checkpoint sample_checkpoint(Modality modality, std::size_t n, int degree = 0) {
    Checkpoint c;
    c.model = clipsplat::testing::random_model<float>(modality, n, 11, degree);
    c.stage = Stage::Stylized;
    c.provenance = {"abc123", 42, 1000};
    c.hints = RenderHints{64, 48, modality == Modality::Video ? 8 : 0, {1.f, 1.f, 1.f}};
    return c;
}

std::size_t first_array_offset(const std::vector<std::uint8_t>& bytes) {
    std::uint32_t len;
    std::memcpy(&len, bytes.data() + 8, 4);
    return 12 + len;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
    const auto dir = std::filesystem::temp_directory_path() / "clipsplat_test_ckpt";
    for (auto modality : {Modality::Image2D, Modality::Video, Modality::Scene3D}) {
        const auto c = sample_checkpoint(modality, 100, modality == Modality::Scene3D ? 3 : 0);
        const auto path = dir / (std::string(to_string(modality)) + ".ckpt");
        save_checkpoint(c, path);
        const auto back = load_checkpoint(path);
        EXPECT_EQ(back.model.modality, modality);
        EXPECT_EQ(back.model.sh_degree, c.model.sh_degree);
        EXPECT_EQ(back.stage, Stage::Stylized);
        EXPECT_EQ(back.provenance.config_hash, "abc123");
        EXPECT_EQ(back.provenance.seed, 42u);
        EXPECT_EQ(back.provenance.steps, 1000u);
        ASSERT_TRUE(back.hints.has_value());
        EXPECT_EQ(back.hints->height, 48);
        for (auto g : kAllParamGroups) EXPECT_TRUE(bit_equal(back.model.group(g), c.model.group(g))) << to_string(g);
        EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(c));
    }
    std::filesystem::remove_all(dir);
}

TEST(Checkpoint, WrongMagicIsFormatError) {
    auto bytes = encode_checkpoint(sample_checkpoint(Modality::Image2D, 3));
    bytes[0] = 'X';
    EXPECT_THROW(decode_checkpoint(bytes), FormatError);
}

TEST(Checkpoint, TruncationAndVersionAreFormatErrors) {
    const auto bytes = encode_checkpoint(sample_checkpoint(Modality::Image2D, 3));
    auto truncated = bytes;
    truncated.resize(bytes.size() - 4);
    EXPECT_THROW(decode_checkpoint(truncated), FormatError);
    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_THROW(decode_checkpoint(trailing), FormatError);

    std::string text(bytes.begin(), bytes.end());
    const auto pos = text.find("\"version\":1");
    ASSERT_NE(pos, std::string::npos);
    text[pos + 10] = '7';
    EXPECT_THROW(decode_checkpoint(std::vector<std::uint8_t>(text.begin(), text.end())), FormatError);
}

TEST(Checkpoint, NaNMeanIsValidationError) {
    auto bytes = encode_checkpoint(sample_checkpoint(Modality::Scene3D, 3));
    const std::uint32_t nan_bits = std::bit_cast<std::uint32_t>(std::numeric_limits<float>::quiet_NaN());
    std::memcpy(bytes.data() + first_array_offset(bytes), &nan_bits, 4);
    EXPECT_THROW(decode_checkpoint(bytes), ValidationError);
}

TEST(Checkpoint, MissingFileIsInputError) {
    try {
        load_checkpoint("/nonexistent/model.ckpt");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::Input);
        EXPECT_NE(std::string(e.what()).find("/nonexistent/model.ckpt"), std::string::npos);
    }
}
