# %% [markdown]
# # Posing a body model
#
# A procedural 24-joint toy body stands in for a real parametric model. It has
# the same tensor layout: template, shape and pose blendshapes, a joint
# regressor, skinning weights and a kinematic tree.

# %%
import numpy as np

from lidarsynth.body_model import JOINT_NAMES, forward, gen_toy_model

model = gen_toy_model(seed=0).validate()
print("vertices", model.template_vertices.shape, "faces", model.faces.shape)

# %% [markdown]
# Zero shape and pose give back the template exactly.

# %%
rest = forward(model, np.zeros(10), np.zeros(72))
print("rest pose == template:", np.array_equal(rest.vertices, model.template_vertices))
print("height (m): %.3f" % np.ptp(rest.vertices[:, 2]))

# %% [markdown]
# The first shape coefficient scales stature; raising the left shoulder
# (joint 16) swings the arm.

# %%
tall = forward(model, np.r_[2.0, np.zeros(9)], np.zeros(72))
print("taller by (m): %.3f" % (np.ptp(tall.vertices[:, 2]) - np.ptp(rest.vertices[:, 2])))

theta = np.zeros(72)
theta[3 * 16:3 * 16 + 3] = [0.0, 0.0, -1.2]
posed = forward(model, np.zeros(10), theta)
wrist = JOINT_NAMES.index("left_wrist")
print("left wrist moved from", rest.joints[wrist].round(3), "to", posed.joints[wrist].round(3))

# %% [markdown]
# Each face carries the joint that dominates its skinning weights, which is
# what labels the simulated points later.

# %%
print("faces per joint:", np.bincount(model.face_joint_label))
