# core numerics package
