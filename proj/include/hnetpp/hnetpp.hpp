#ifndef HNETPP_HNETPP_HPP
#define HNETPP_HNETPP_HPP

#include "hnetpp/autodiff.hpp"
#include "hnetpp/byte_frontend.hpp"
#include "hnetpp/checkpoint.hpp"
#include "hnetpp/config.hpp"
#include "hnetpp/corpus.hpp"
#include "hnetpp/corruption.hpp"
#include "hnetpp/curriculum.hpp"
#include "hnetpp/decoder.hpp"
#include "hnetpp/errors.hpp"
#include "hnetpp/gradcheck.hpp"
#include "hnetpp/latent.hpp"
#include "hnetpp/metrics.hpp"
#include "hnetpp/mixer.hpp"
#include "hnetpp/mixture.hpp"
#include "hnetpp/model.hpp"
#include "hnetpp/nn.hpp"
#include "hnetpp/objective.hpp"
#include "hnetpp/optim.hpp"
#include "hnetpp/rng.hpp"
#include "hnetpp/router.hpp"
#include "hnetpp/selfcheck.hpp"
#include "hnetpp/tensor.hpp"
#include "hnetpp/trainer.hpp"
#include "hnetpp/utf8.hpp"

#endif  // HNETPP_HNETPP_HPP
