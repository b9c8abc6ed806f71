from affectfusion.encoding.boaw import BoawCodebook, block_centers, boaw_encode
from affectfusion.encoding.fisher import fisher_encode, fv_normalize
from affectfusion.encoding.gmm import (
    VAR_FLOOR,
    GmmModel,
    gmm_fit_em,
    gmm_loglik,
    init_stats_from_kmeans,
    responsibilities,
)
from affectfusion.encoding.kmeans import KMeansModel, kmeans_fit
from affectfusion.encoding.pca import PcaModel, pca_apply, pca_fit
from affectfusion.encoding.standardize import StandardizerModel, standardize_apply, standardize_fit
