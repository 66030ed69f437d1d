#ifndef WID_IMAGE_IO_H
#define WID_IMAGE_IO_H

#include <string>

#include "wid/tensor.h"

namespace wid {

// Images are [H,W,3] float tensors with values in [0,1], RGB order.
Tensor<float> load_image(const std::string& path);
void save_image(const Tensor<float>& img, const std::string& path);

}  // namespace wid

#endif
